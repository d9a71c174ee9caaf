#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "llqr/divergence.hpp"
#include "llqr/lqr.hpp"
#include "llqr/oracle.hpp"
#include "llqr/rosenbrock.hpp"
#include "test_support.hpp"

using namespace llqr;
using llqr::testing::Rng;

namespace {

struct Bound {
  TrajectoryPtr traj;
  LinearizationPtr lin;
  DivergencePtr div;
  LossPtr loss;
  ResidualPtr residual;
};

Bound bind(const testing::RandomNet& rn, const DivergenceSpec& spec, Rng& rng) {
  Bound b;
  b.traj = std::make_shared<const Trajectory>(forward(rn.net, rn.theta, rn.x0));
  b.lin = std::make_shared<const Linearization>(rn.net, b.traj);
  const int batch = static_cast<int>(rn.x0.rows());
  if (spec.kind == DivergenceKind::KLNatural && spec.head == OutputHead::Softmax) {
    IntVector labels(batch);
    for (int i = 0; i < batch; ++i) labels(i) = rng.uniform_int(0, rn.net.out_dim() - 1);
    b.loss = std::make_shared<SoftmaxCrossEntropyLoss>(labels);
  } else {
    b.loss = std::make_shared<SquaredErrorLoss>(rng.matrix(batch, rn.net.out_dim()));
  }
  if (spec.kind == DivergenceKind::GaussNewton) {
    b.residual = std::make_shared<LinearResidual>(rng.matrix(batch, rn.net.out_dim()));
  }
  b.div = bind_divergence(spec, rn.net, b.traj, b.loss, b.residual);
  return b;
}

std::vector<DivergenceSpec> all_variants(const testing::RandomNet& rn, Rng& rng) {
  std::vector<DivergenceSpec> specs;
  specs.push_back(DivergenceSpec{.kind = DivergenceKind::Euclidean});
  specs.push_back(
      DivergenceSpec{.kind = DivergenceKind::DampedNewton, .newton_lambda = rng.uniform(0.0, 2.0)});
  specs.push_back(DivergenceSpec{.kind = DivergenceKind::GaussNewton});
  specs.push_back(DivergenceSpec{.kind = DivergenceKind::KLNatural});
  DivergenceSpec inter{.kind = DivergenceKind::IntermediateLayer};
  for (int k = 1; k <= rn.net.depth(); ++k) {
    if (rng.uniform_int(0, 1)) inter.layers.push_back(k);
  }
  if (inter.layers.empty()) inter.layers.push_back(rn.net.depth());
  specs.push_back(inter);
  return specs;
}

}  // namespace

TEST_CASE("spec strings parse and emit") {
  CHECK(DivergenceSpec::parse("euclidean").kind == DivergenceKind::Euclidean);
  CHECK(DivergenceSpec::parse("newton:0.5").newton_lambda == doctest::Approx(0.5));
  CHECK(DivergenceSpec::parse("gauss-newton").kind == DivergenceKind::GaussNewton);
  CHECK(DivergenceSpec::parse("kl").kind == DivergenceKind::KLNatural);
  auto inter = DivergenceSpec::parse("intermediate:1,3");
  CHECK(inter.layers == std::vector<int>{1, 3});
  CHECK(DivergenceSpec::parse(inter.to_string()).layers == inter.layers);
  CHECK_THROWS_AS(DivergenceSpec::parse("mahalanobis"), ConfigError);
}

TEST_CASE("adjoint: single layer reduces to the boundary condition") {
  Rng rng(41);
  auto rn = testing::random_net(rng, 1, 4, 2);
  auto b = bind(rn, DivergenceSpec{.kind = DivergenceKind::DampedNewton}, rng);
  AdjointState adj = adjoint_recursion(*b.div, *b.lin);
  Matrix expect = b.div->terminal_grad(b.traj->terminal());
  CHECK((adj.p.back() - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adjoint: identity layers with squared-error terminal") {
  // psi_N = 0.5||x||^2 via the damped-Newton divergence with zero targets:
  // p_1 = p_2 = x_N at batch 1.
  Network net({std::make_shared<ElementwiseLayer>(Activation::Identity, 3),
               std::make_shared<ElementwiseLayer>(Activation::Identity, 3)});
  Rng rng(43);
  Matrix x0 = rng.matrix(1, 3);
  auto traj = std::make_shared<const Trajectory>(forward(net, Vector(), x0));
  Linearization lin(net, traj);
  auto loss = std::make_shared<SquaredErrorLoss>(Matrix::Zero(1, 3));
  auto div = bind_divergence(DivergenceSpec{.kind = DivergenceKind::DampedNewton}, net, traj, loss);
  AdjointState adj = adjoint_recursion(*div, lin);
  CHECK((adj.p[1] - x0).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((adj.p[2] - x0).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("cost blocks: euclidean gives Q=0, M=0, R=I, QN=0") {
  Rng rng(47);
  auto rn = testing::random_net(rng);
  auto b = bind(rn, DivergenceSpec{.kind = DivergenceKind::Euclidean}, rng);
  auto adj = std::make_shared<AdjointState>(adjoint_recursion(*b.div, *b.lin));
  auto blocks = cost_blocks(rn.net, b.traj, b.div, b.loss, adj,
                            Vector::Zero(rn.net.depth()));
  for (int i = 0; i < rn.net.depth(); ++i) {
    CHECK(blocks->dense_Q(i).cwiseAbs().maxCoeff() == 0.0);
    const int p = rn.net.layer_param_dim(i);
    if (p > 0) {
      CHECK(blocks->dense_M(i).cwiseAbs().maxCoeff() == 0.0);
      CHECK((blocks->dense_R(i) - Matrix::Identity(p, p)).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  CHECK(blocks->dense_QN().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cost blocks: KL softmax terminal block is the categorical Fisher") {
  Rng rng(53);
  auto rn = testing::random_softmax_net(rng);
  // single sample so the 1/B factor is 1
  rn.x0 = rn.x0.topRows(1);
  auto b = bind(rn, DivergenceSpec{.kind = DivergenceKind::KLNatural}, rng);
  auto blocks = cost_blocks(rn.net, b.traj, b.div, b.loss, 0.0);
  Vector pi = softmax_rows(b.traj->terminal()).row(0).transpose();
  Matrix expect = Matrix(pi.asDiagonal()) - pi * pi.transpose();
  CHECK((blocks->dense_QN() - expect).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("cost blocks: gauss-newton with r(x)=x-t has QN = I") {
  Rng rng(59);
  auto rn = testing::random_net(rng, 2, 4, 1);
  rn.x0 = rn.x0.topRows(1);
  auto b = bind(rn, DivergenceSpec{.kind = DivergenceKind::GaussNewton}, rng);
  auto blocks = cost_blocks(rn.net, b.traj, b.div, b.loss, 0.0);
  const int d = rn.net.out_dim();
  CHECK((blocks->dense_QN() - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("divergence values vanish at the basepoint and are locally nonnegative") {
  Rng rng(61);
  for (int rep = 0; rep < 6; ++rep) {
    auto rn = testing::random_net(rng, 3, 4, 3);
    for (const auto& spec : all_variants(rn, rng)) {
      auto b = bind(rn, spec, rng);
      CHECK(std::abs(divergence_value(rn.net, *b.div, rn.theta, rn.x0)) < 1e-12);
      if (spec.kind == DivergenceKind::DampedNewton) continue;  // PSD not guaranteed
      for (int k = 0; k < 5; ++k) {
        Vector dtheta = 1e-3 * rng.vector(rn.net.param_dim());
        double v = divergence_value(rn.net, *b.div, Vector(rn.theta + dtheta), rn.x0);
        CHECK(v >= -1e-12);
      }
    }
  }
}

TEST_CASE("dense curvature: euclidean metric is the identity") {
  Rng rng(67);
  auto rn = testing::random_net(rng, 3, 4, 2);
  auto b = bind(rn, DivergenceSpec{.kind = DivergenceKind::Euclidean}, rng);
  Matrix h = dense_curvature(rn.net, *b.div, rn.theta, rn.x0);
  CHECK((h - Matrix::Identity(h.rows(), h.cols())).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("dense curvature: damped newton on rosenbrock at the origin") {
  for (double lambda : {0.0, 0.7}) {
    Network net = rosenbrock_single_layer_net(1.0, 100.0);
    Vector theta = Vector::Zero(2);
    auto traj = std::make_shared<const Trajectory>(forward(net, theta, rosenbrock_input()));
    auto div = bind_divergence(
        DivergenceSpec{.kind = DivergenceKind::DampedNewton, .newton_lambda = lambda}, net, traj,
        rosenbrock_loss());
    Matrix h = dense_curvature(net, *div, theta, rosenbrock_input());
    Matrix expect(2, 2);
    expect << 2.0 + lambda, 0.0, 0.0, 200.0 + lambda;
    CHECK((h - expect).cwiseAbs().maxCoeff() < 1e-6 * 200.0);
  }
}

TEST_CASE("dense curvature: kl with a gaussian head matches the gaussian fisher") {
  Rng rng(69);
  auto rn = testing::random_net(rng, 2, 3, 2);
  auto traj = std::make_shared<const Trajectory>(forward(rn.net, rn.theta, rn.x0));
  auto loss = std::make_shared<SquaredErrorLoss>(rng.matrix(rn.x0.rows(), rn.net.out_dim()));
  DivergenceSpec spec{.kind = DivergenceKind::KLNatural, .head = OutputHead::Gaussian};
  auto div = bind_divergence(spec, rn.net, traj, loss);
  Matrix h = dense_curvature(rn.net, *div, rn.theta, rn.x0, true);
  DenseCurvature f = fisher_dense(rn.net, rn.theta, rn.x0, OutputHead::Gaussian, *loss);
  const double scale = 1.0 + f.H.cwiseAbs().maxCoeff();
  CHECK((h - f.H).cwiseAbs().maxCoeff() / scale < 1e-5);

  ExactStep step = exact_step(rn.net, spec, rn.theta, rn.x0, loss, 1e-6);
  Vector ref = newton_step_dense(f, 1e-6);
  CHECK((step.dtheta - ref).norm() <= 1e-6 * (1.0 + ref.norm()));
}

TEST_CASE("dense curvature cap raises") {
  Rng rng(71);
  auto rn = testing::random_net(rng, 1, 3, 1);
  auto b = bind(rn, DivergenceSpec{.kind = DivergenceKind::Euclidean}, rng);
  CHECK_THROWS_AS(dense_curvature(rn.net, *b.div, rn.theta, rn.x0, false, 1), CapacityError);
}

TEST_CASE("property: adjoint choice makes the augmented divergence stationary in x") {
  Rng rng(73);
  for (int rep = 0; rep < 6; ++rep) {
    auto rn = testing::random_net(rng, 3, 4, 2);
    for (const auto& spec : all_variants(rn, rng)) {
      auto b = bind(rn, spec, rng);
      AdjointState adj = adjoint_recursion(*b.div, *b.lin);

      // Central differences of H(x, theta^k, p^k) along random state
      // directions at the basepoint. x_0 is fixed, x_1..x_N vary.
      double scale = 1.0;
      for (int i = 1; i <= rn.net.depth(); ++i) {
        scale = std::max(scale, adj.p[i].cwiseAbs().maxCoeff());
      }
      for (int probe = 0; probe < 3; ++probe) {
        std::vector<Matrix> dir;
        double norm2 = 0;
        for (const Matrix& xi : b.traj->x) {
          dir.push_back(rng.matrix(xi.rows(), xi.cols()));
          norm2 += dir.back().squaredNorm();
        }
        dir[0].setZero();
        for (auto& d : dir) d /= std::sqrt(norm2);
        const double h = 1e-6;
        std::vector<Matrix> xp = b.traj->x, xm = b.traj->x;
        for (size_t i = 0; i < xp.size(); ++i) {
          xp[i] += h * dir[i];
          xm[i] -= h * dir[i];
        }
        double vp = hamiltonian_value(rn.net, *b.div, xp, rn.theta, adj);
        double vm = hamiltonian_value(rn.net, *b.div, xm, rn.theta, adj);
        CHECK(std::abs(vp - vm) / (2.0 * h) <= 1e-8 * scale + 1e-7);
      }
    }
  }
}

TEST_CASE("property: layerwise decomposition matches the dense curvature") {
  Rng rng(79);
  for (int rep = 0; rep < 6; ++rep) {
    auto rn = testing::random_net(rng, 3, 4, 2);
    for (const auto& spec : all_variants(rn, rng)) {
      auto b = bind(rn, spec, rng);
      auto blocks = cost_blocks(rn.net, b.traj, b.div, b.loss, 0.0);
      Matrix h = dense_curvature(rn.net, *b.div, rn.theta, rn.x0, true);

      Vector dtheta = rng.vector(rn.net.param_dim());
      double lhs = dtheta.dot(h * dtheta);

      auto dx = b.lin->roll(dtheta);
      double rhs = dot(dx.back(), blocks->QN(dx.back()));
      for (int i = 0; i < rn.net.depth(); ++i) {
        ConstVecRef dth = dtheta.segment(rn.net.param_offset(i), rn.net.layer_param_dim(i));
        rhs += dot(dx[i], blocks->Q(i, dx[i]));
        if (dth.size() > 0) {
          rhs += dth.dot(blocks->R(i, dth)) + 2.0 * dth.dot(blocks->M(i, dx[i]));
        }
      }
      const double scale = std::abs(lhs) + dtheta.squaredNorm();
      CHECK(std::abs(lhs - rhs) <= 1e-5 * scale);
    }
  }
}

TEST_CASE("property: dense block forms reproduce the actions") {
  Rng rng(97);
  for (int rep = 0; rep < 5; ++rep) {
    auto rn = testing::random_net(rng, 3, 4, 2);
    auto b = bind(rn, DivergenceSpec{.kind = DivergenceKind::DampedNewton, .newton_lambda = 0.3},
                  rng);
    auto blocks = cost_blocks(rn.net, b.traj, b.div, b.loss, 0.0);
    const int batch = static_cast<int>(rn.x0.rows());
    for (int i = 0; i < rn.net.depth(); ++i) {
      Matrix dx = rng.matrix(batch, rn.net.state_dim(i));
      Vector qv = blocks->dense_Q(i) * flatten_rows(dx);
      CHECK((qv - flatten_rows(blocks->Q(i, dx))).cwiseAbs().maxCoeff() <=
            1e-12 * (1.0 + qv.cwiseAbs().maxCoeff()));
      const int p = rn.net.layer_param_dim(i);
      if (p > 0) {
        Vector dth = rng.vector(p);
        Vector rv = blocks->dense_R(i) * dth;
        CHECK((rv - blocks->R(i, dth)).cwiseAbs().maxCoeff() <=
              1e-12 * (1.0 + rv.cwiseAbs().maxCoeff()));
        Vector mv = blocks->dense_M(i) * flatten_rows(dx);
        CHECK((mv - blocks->M(i, dx)).cwiseAbs().maxCoeff() <=
              1e-12 * (1.0 + mv.cwiseAbs().maxCoeff()));
      }
    }
    Matrix dxn = rng.matrix(batch, rn.net.out_dim());
    Vector qn = blocks->dense_QN() * flatten_rows(dxn);
    CHECK((qn - flatten_rows(blocks->QN(dxn))).cwiseAbs().maxCoeff() <=
          1e-12 * (1.0 + qn.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("property: Q and R actions are symmetric, M pairs with Mt") {
  Rng rng(83);
  for (int rep = 0; rep < 10; ++rep) {
    auto rn = testing::random_net(rng);
    for (const auto& spec : all_variants(rn, rng)) {
      auto b = bind(rn, spec, rng);
      auto blocks = cost_blocks(rn.net, b.traj, b.div, b.loss, 0.0);
      for (int i = 0; i < rn.net.depth(); ++i) {
        Matrix v = rng.matrix(rn.x0.rows(), rn.net.state_dim(i));
        Matrix w = rng.matrix(rn.x0.rows(), rn.net.state_dim(i));
        double ql = dot(w, blocks->Q(i, v));
        double qr = dot(v, blocks->Q(i, w));
        CHECK(std::abs(ql - qr) <= 1e-12 * (1.0 + std::abs(ql)));

        const int p = rn.net.layer_param_dim(i);
        if (p > 0) {
          Vector a = rng.vector(p);
          Vector c = rng.vector(p);
          double rl = a.dot(blocks->R(i, c));
          double rr = c.dot(blocks->R(i, a));
          CHECK(std::abs(rl - rr) <= 1e-12 * (1.0 + std::abs(rl)));

          double ml = a.dot(blocks->M(i, v));
          double mr = dot(blocks->Mt(i, a), v);
          CHECK(std::abs(ml - mr) <= 1e-12 * (1.0 + std::abs(ml)));
        }
      }
    }
  }
}

TEST_CASE("property: damping adds exactly lambda ||dtheta_i||^2 to the quadratic form") {
  Rng rng(89);
  for (int rep = 0; rep < 10; ++rep) {
    auto rn = testing::random_net(rng);
    auto spec = DivergenceSpec{.kind = DivergenceKind::DampedNewton, .newton_lambda = 0.3};
    auto b = bind(rn, spec, rng);
    auto adj = std::make_shared<AdjointState>(adjoint_recursion(*b.div, *b.lin));
    Vector damping = rng.vector(rn.net.depth()).cwiseAbs();
    auto plain = cost_blocks(rn.net, b.traj, b.div, b.loss, adj, Vector::Zero(rn.net.depth()));
    auto damped = cost_blocks(rn.net, b.traj, b.div, b.loss, adj, damping);
    for (int i = 0; i < rn.net.depth(); ++i) {
      const int p = rn.net.layer_param_dim(i);
      if (p == 0) continue;
      Vector dth = rng.vector(p);
      double d0 = dth.dot(plain->R(i, dth));
      double d1 = dth.dot(damped->R(i, dth));
      CHECK(d1 - d0 == doctest::Approx(damping(i) * dth.squaredNorm()).epsilon(1e-12));
    }
  }
}
