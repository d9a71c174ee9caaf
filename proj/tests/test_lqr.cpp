#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "llqr/lqr.hpp"
#include "llqr/oracle.hpp"
#include "llqr/rosenbrock.hpp"
#include "test_support.hpp"

using namespace llqr;
using llqr::testing::Rng;

namespace {

struct Pipeline {
  TrajectoryPtr traj;
  LinearizationPtr lin;
  CostBlocksPtr blocks;
  DivergencePtr div;
  LossPtr loss;
  ResidualPtr residual;
};

Pipeline build(const testing::RandomNet& rn, const DivergenceSpec& spec, Rng& rng,
               double damping = 0.0) {
  Pipeline p;
  p.traj = std::make_shared<const Trajectory>(forward(rn.net, rn.theta, rn.x0));
  p.lin = std::make_shared<const Linearization>(rn.net, p.traj);
  const int batch = static_cast<int>(rn.x0.rows());
  if (spec.kind == DivergenceKind::KLNatural) {
    IntVector labels(batch);
    for (int i = 0; i < batch; ++i) labels(i) = rng.uniform_int(0, rn.net.out_dim() - 1);
    p.loss = std::make_shared<SoftmaxCrossEntropyLoss>(labels);
  } else {
    p.loss = std::make_shared<SquaredErrorLoss>(rng.matrix(batch, rn.net.out_dim()));
  }
  if (spec.kind == DivergenceKind::GaussNewton) {
    p.residual = std::make_shared<LinearResidual>(rng.matrix(batch, rn.net.out_dim()));
  }
  p.div = bind_divergence(spec, rn.net, p.traj, p.loss, p.residual);
  auto adj = std::make_shared<AdjointState>(adjoint_recursion(*p.div, *p.lin));
  p.blocks = cost_blocks(rn.net, p.traj, p.div, p.loss, adj,
                         Vector::Constant(rn.net.depth(), damping));
  return p;
}

}  // namespace

TEST_CASE("riccati: euclidean blocks collapse to backprop") {
  Rng rng(101);
  for (int rep = 0; rep < 10; ++rep) {
    auto rn = testing::random_net(rng);
    auto p = build(rn, DivergenceSpec{.kind = DivergenceKind::Euclidean}, rng);
    RiccatiState st = riccati_backward(*p.blocks, *p.lin);
    for (const Matrix& k : st.K) {
      CHECK(k.cwiseAbs().maxCoeff() < 1e-14);
    }
    // lambda_i = A_i^T lambda_{i+1}
    for (int i = rn.net.depth() - 1; i >= 0; --i) {
      Matrix lam = unflatten_rows(st.lambda[i + 1], rn.x0.rows(), rn.net.state_dim(i + 1));
      Vector expect = flatten_rows(p.lin->At(i, lam));
      CHECK((st.lambda[i] - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
    ExactStep step = forward_rollout(st, *p.blocks, *p.lin);
    Vector g = gradient(rn.net, *p.loss, *p.traj);
    CHECK((step.dtheta + g).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + g.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("riccati: one-step recursion matches the closed form") {
  // Single affine layer, squared-error terminal: K_1 = Q_N and
  // dtheta = -(R + B^T Q_N B)^{-1} B^T g_N.
  Rng rng(103);
  auto rn = testing::random_net(rng, 1, 4, 2);
  auto p = build(rn, DivergenceSpec{.kind = DivergenceKind::Euclidean}, rng);
  RiccatiState st = riccati_backward(*p.blocks, *p.lin);
  CHECK((st.K.back() - p.blocks->dense_QN()).cwiseAbs().maxCoeff() == 0.0);

  ExactStep step = forward_rollout(st, *p.blocks, *p.lin);
  Matrix b = p.lin->dense_B(0);
  Matrix qn = p.blocks->dense_QN();
  const int pd = rn.net.param_dim();
  Matrix s = Matrix::Identity(pd, pd) + b.transpose() * qn * b;
  Vector expect = -s.ldlt().solve(b.transpose() * flatten_rows(p.blocks->gN()));
  CHECK((step.dtheta - expect).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + expect.cwiseAbs().maxCoeff()));
}

TEST_CASE("riccati: zero terminal gradient gives a zero step") {
  Rng rng(107);
  auto rn = testing::random_net(rng);
  auto traj = std::make_shared<const Trajectory>(forward(rn.net, rn.theta, rn.x0));
  auto lin = std::make_shared<const Linearization>(rn.net, traj);
  // Targets equal to the outputs make the loss gradient vanish.
  auto loss = std::make_shared<SquaredErrorLoss>(traj->terminal());
  auto div = bind_divergence(DivergenceSpec{.kind = DivergenceKind::DampedNewton,
                                            .newton_lambda = 0.5},
                             rn.net, traj, loss);
  auto adj = std::make_shared<AdjointState>(adjoint_recursion(*div, *lin));
  auto blocks = cost_blocks(rn.net, traj, div, loss, adj, Vector::Zero(rn.net.depth()));
  RiccatiState st = riccati_backward(*blocks, *lin);
  for (const Vector& lam : st.lambda) {
    CHECK(lam.cwiseAbs().maxCoeff() == 0.0);
  }
  ExactStep step = forward_rollout(st, *blocks, *lin);
  CHECK(step.dtheta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rollout: dx satisfies the linearized dynamics exactly") {
  Rng rng(109);
  auto rn = testing::random_net(rng);
  auto p = build(rn, DivergenceSpec{.kind = DivergenceKind::DampedNewton, .newton_lambda = 1.0},
                 rng);
  RiccatiState st = riccati_backward(*p.blocks, *p.lin);
  ExactStep step = forward_rollout(st, *p.blocks, *p.lin);
  auto rolled = p.lin->roll(step.dtheta);
  for (size_t i = 0; i < rolled.size(); ++i) {
    CHECK((rolled[i] - step.dx[i]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("exact step: rosenbrock two-layer equals analytic newton") {
  Network net = rosenbrock_two_layer_net(1.0, 100.0);
  Vector theta(2);
  theta << -1.0, 1.0;  // H is positive definite here
  ExactStep step = exact_step(net, DivergenceSpec{.kind = DivergenceKind::DampedNewton}, theta,
                              rosenbrock_input(), rosenbrock_loss());
  Vector g = rosenbrock_grad(1.0, 100.0, theta(0), theta(1));
  Matrix h = rosenbrock_hess(1.0, 100.0, theta(0), theta(1));
  Vector newton = -h.ldlt().solve(g);
  // The reference is assembled analytically, so the agreement is tighter
  // than the finite-difference-limited variant checks.
  CHECK((step.dtheta - newton).norm() <= 1e-10 * (1.0 + newton.norm()));
}

TEST_CASE("exact step: newton equivalence across variants and batch sizes") {
  Rng rng(113);
  int done = 0;
  for (int rep = 0; done < 12; ++rep) {
    auto rn = testing::random_net(rng, 3, 4, 3);
    if (rn.net.param_dim() > 60) continue;
    std::vector<DivergenceSpec> specs = {
        DivergenceSpec{.kind = DivergenceKind::DampedNewton, .newton_lambda = 2.0},
        DivergenceSpec{.kind = DivergenceKind::GaussNewton},
        DivergenceSpec{.kind = DivergenceKind::KLNatural},
        DivergenceSpec{.kind = DivergenceKind::IntermediateLayer,
                       .layers = {rn.net.depth()}},
        // Interior metric: downstream parameters are constrained only by the
        // damping term, which the dense reference carries as well.
        DivergenceSpec{.kind = DivergenceKind::IntermediateLayer,
                       .layers = {1, rn.net.depth()}},
    };
    for (const auto& spec : specs) {
      // Singular-metric variants need damping for invertibility.
      const double damping = spec.kind == DivergenceKind::DampedNewton ? 0.0 : 1e-2;
      auto p = build(rn, spec, rng, damping);
      RiccatiState st = riccati_backward(*p.blocks, *p.lin);
      ExactStep step = forward_rollout(st, *p.blocks, *p.lin);

      Matrix h = dense_curvature(rn.net, *p.div, rn.theta, rn.x0, true);
      h.diagonal().array() += damping;
      Vector g = gradient(rn.net, *p.loss, *p.traj);
      Vector ref = -h.ldlt().solve(g);
      CHECK((step.dtheta - ref).norm() <= 1e-6 * (1.0 + ref.norm()));
    }
    ++done;
  }
}

TEST_CASE("exact step: damped newton approaches -g/lambda as lambda grows") {
  Rng rng(127);
  auto rn = testing::random_net(rng, 2, 3, 2);
  const double lambda = 1e6;
  auto p = build(rn, DivergenceSpec{.kind = DivergenceKind::DampedNewton,
                                    .newton_lambda = lambda},
                 rng);
  RiccatiState st = riccati_backward(*p.blocks, *p.lin);
  ExactStep step = forward_rollout(st, *p.blocks, *p.lin);
  Vector g = gradient(rn.net, *p.loss, *p.traj);
  // ||lambda (H0 + lambda I)^{-1} g - g|| <= (||H0||/lambda)/(1 - ||H0||/lambda) ||g||
  auto undamped = bind_divergence(DivergenceSpec{.kind = DivergenceKind::DampedNewton},
                                  rn.net, p.traj, p.loss);
  Matrix h0 = dense_curvature(rn.net, *undamped, rn.theta, rn.x0);
  const double hnorm = h0.cwiseAbs().maxCoeff() * h0.rows();
  REQUIRE(hnorm < lambda);
  const double bound = (hnorm / lambda) / (1.0 - hnorm / lambda);
  CHECK((lambda * step.dtheta + g).norm() <= 2.0 * bound * g.norm() + 1e-10);
}

TEST_CASE("exact step: kl equals the dense fisher solve") {
  Rng rng(131);
  for (int rep = 0; rep < 5; ++rep) {
    auto rn = testing::random_softmax_net(rng, 30);
    IntVector labels(rn.x0.rows());
    for (int i = 0; i < rn.x0.rows(); ++i) labels(i) = rng.uniform_int(0, rn.net.out_dim() - 1);
    auto loss = std::make_shared<SoftmaxCrossEntropyLoss>(labels);
    const double jitter = 1e-8;
    ExactStep step = exact_step(rn.net, DivergenceSpec{.kind = DivergenceKind::KLNatural},
                                rn.theta, rn.x0, loss, jitter);
    DenseCurvature f = fisher_dense(rn.net, rn.theta, rn.x0, OutputHead::Softmax, *loss);
    Vector ref = newton_step_dense(f, jitter);
    CHECK((step.dtheta - ref).norm() <= 1e-6 * (1.0 + ref.norm()));
  }
}

TEST_CASE("errors: singular inner matrix names the layer and damping fixes it") {
  // Pure intermediate metric on layer 1 leaves downstream parameters free:
  // R = 0 there, so the inner solve is singular without damping.
  Rng rng(137);
  Network net({std::make_shared<AffineLayer>(2, 3), std::make_shared<AffineLayer>(3, 2)});
  Vector theta = rng.vector(net.param_dim());
  Matrix x0 = rng.matrix(1, 2);
  auto loss = std::make_shared<SquaredErrorLoss>(rng.matrix(1, 2));
  DivergenceSpec spec{.kind = DivergenceKind::IntermediateLayer, .layers = {1}};
  CHECK_THROWS_AS(exact_step(net, spec, theta, x0, loss, 0.0), SolverError);
  ExactStep step = exact_step(net, spec, theta, x0, loss, 0.5);
  CHECK(step.dtheta.allFinite());
}

TEST_CASE("indefinite quadratic model is solved but flagged") {
  // At (0, 1) the benchmark curvature is [[-398, 0], [0, 200]]: invertible
  // but indefinite, so the inner factorization takes the fallback path.
  Network net = rosenbrock_two_layer_net(1.0, 100.0);
  Vector theta(2);
  theta << 0.0, 1.0;
  ExactStep step = exact_step(net, DivergenceSpec{.kind = DivergenceKind::DampedNewton}, theta,
                              rosenbrock_input(), rosenbrock_loss());
  CHECK(step.non_descent_possible);
  Matrix h = rosenbrock_hess(1.0, 100.0, 0.0, 1.0);
  Vector g = rosenbrock_grad(1.0, 100.0, 0.0, 1.0);
  Vector ref = -h.fullPivLu().solve(g);
  CHECK((step.dtheta - ref).norm() <= 1e-8 * (1.0 + ref.norm()));

  // A positive-definite point leaves the flag off.
  theta << -1.0, 1.0;
  ExactStep pd = exact_step(net, DivergenceSpec{.kind = DivergenceKind::DampedNewton}, theta,
                            rosenbrock_input(), rosenbrock_loss());
  CHECK(!pd.non_descent_possible);
}

TEST_CASE("property: kkt residuals vanish at the solution") {
  Rng rng(139);
  for (int rep = 0; rep < 10; ++rep) {
    auto rn = testing::random_net(rng);
    for (double damping : {0.0, 0.3}) {
      auto p = build(rn, DivergenceSpec{.kind = DivergenceKind::DampedNewton,
                                        .newton_lambda = 0.8},
                     rng, damping);
      RiccatiState st = riccati_backward(*p.blocks, *p.lin);
      ExactStep step = forward_rollout(st, *p.blocks, *p.lin);
      KktResiduals res = kkt_residuals(st, *p.blocks, *p.lin, step);
      CHECK(res.max_relative() <= 1e-8);
    }
  }
}

TEST_CASE("property: gains are symmetric") {
  Rng rng(149);
  auto rn = testing::random_net(rng);
  auto p = build(rn, DivergenceSpec{.kind = DivergenceKind::DampedNewton, .newton_lambda = 0.5},
                 rng);
  RiccatiState st = riccati_backward(*p.blocks, *p.lin);
  for (const Matrix& k : st.K) {
    CHECK((k - k.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + k.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("property: random perturbations never improve the convex objective") {
  Rng rng(151);
  auto rn = testing::random_net(rng, 3, 4, 2);
  // Euclidean blocks are PSD with R = I, so the solved step is the global
  // minimizer of the quadratic program.
  auto p = build(rn, DivergenceSpec{.kind = DivergenceKind::Euclidean}, rng);
  RiccatiState st = riccati_backward(*p.blocks, *p.lin);
  ExactStep step = forward_rollout(st, *p.blocks, *p.lin);
  for (int k = 0; k < 100; ++k) {
    Vector probe = step.dtheta + rng.uniform(1e-6, 1e-1) * rng.vector(rn.net.param_dim());
    CHECK(lqr_objective(*p.blocks, *p.lin, probe) >= step.objective_value - 1e-12);
  }
}

TEST_CASE("property: recursion allocates per-layer matrices only") {
  Rng rng(157);
  std::vector<LayerPtr> layers;
  int d = 5;
  for (int i = 0; i < 6; ++i) {
    layers.push_back(std::make_shared<AffineLayer>(d, 5));
    d = 5;
  }
  Network net{layers};
  Vector theta = 0.3 * rng.vector(net.param_dim());
  Matrix x0 = rng.matrix(2, 5);
  auto traj = std::make_shared<const Trajectory>(forward(net, theta, x0));
  auto lin = std::make_shared<const Linearization>(net, traj);
  auto loss = std::make_shared<SquaredErrorLoss>(rng.matrix(2, 5));
  auto div = bind_divergence(DivergenceSpec{.kind = DivergenceKind::DampedNewton,
                                            .newton_lambda = 1.0},
                             net, traj, loss);
  auto adj = std::make_shared<AdjointState>(adjoint_recursion(*div, *lin));
  auto blocks = cost_blocks(net, traj, div, loss, adj, Vector::Zero(net.depth()));
  RiccatiState st = riccati_backward(*blocks, *lin);

  long per_layer_cap = 0;
  for (int i = 0; i < net.depth(); ++i) {
    const long state = 2L * 5;  // batch * d_i
    const long p = net.layer_param_dim(i);
    per_layer_cap = std::max(per_layer_cap, std::max(state, p) * std::max(state, p));
  }
  const long total = net.param_dim();
  CHECK(st.max_dense_entries <= per_layer_cap);
  CHECK(st.max_dense_entries < total * total);
}
