#include "llqr/lqr.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace llqr {

void StageSolve::compute(const Matrix& s, int layer) {
  llt_.compute(s);
  if (llt_.info() == Eigen::Success) {
    indefinite_ = false;
    return;
  }
  indefinite_ = true;
  ldlt_.compute(s);
  if (ldlt_.info() != Eigen::Success) {
    throw SolverError("riccati_backward: factorization failed at layer " + std::to_string(layer));
  }
  const Vector d = ldlt_.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (dmax == 0.0 || d.cwiseAbs().minCoeff() <= 1e-13 * dmax) {
    throw SolverError("riccati_backward: inner matrix singular at layer " + std::to_string(layer) +
                      " (try damping)");
  }
}

Vector StageSolve::solve(const Vector& rhs) const {
  if (indefinite_) return ldlt_.solve(rhs);
  return llt_.solve(rhs);
}

RiccatiState riccati_backward(const CostBlocks& blocks, const Linearization& lin, int cap) {
  return riccati_backward(blocks, lin, RiccatiOptions{cap, false});
}

RiccatiState riccati_backward(const CostBlocks& blocks, const Linearization& lin,
                              const RiccatiOptions& options) {
  const int cap = options.cap;
  const int n = blocks.depth();
  const Network& net = blocks.net();

  RiccatiState st;
  st.K.resize(n + 1);
  st.lambda.resize(n + 1);
  st.solve.resize(n);
  st.G.resize(n);
  st.Bd.resize(n);

  auto track = [&st](const Matrix& m) {
    st.max_dense_entries = std::max(st.max_dense_entries, static_cast<long>(m.size()));
  };

  st.K[n] = blocks.dense_QN(cap);
  st.lambda[n] = flatten_rows(blocks.gN());
  track(st.K[n]);

  for (int i = n - 1; i >= 0; --i) {
    const int p = net.layer_param_dim(i);
    const Matrix a = lin.dense_A(i, cap);
    const Matrix b = lin.dense_B(i, cap);
    track(a);

    const Matrix ka = st.K[i + 1] * a;   // (B d_{i+1}) x (B d_i)
    const Matrix kb = st.K[i + 1] * b;   // (B d_{i+1}) x p

    Matrix s = blocks.dense_R(i, cap);
    s.noalias() += b.transpose() * kb;
    s = 0.5 * (s + s.transpose()).eval();

    Matrix g = blocks.dense_M(i, cap);
    if (options.flip_mixed_sign) g = -g;
    g.noalias() += b.transpose() * ka;

    st.solve[i].compute(s, i);
    if (st.solve[i].indefinite()) st.any_indefinite = true;

    // K_i = A^T K A + Q - G^T S^{-1} G, symmetrized against roundoff drift.
    Matrix sg(p, static_cast<int>(g.cols()));
    for (int c = 0; c < g.cols(); ++c) {
      sg.col(c) = st.solve[i].solve(g.col(c));
    }
    Matrix k = blocks.dense_Q(i, cap);
    k.noalias() += a.transpose() * ka;
    k.noalias() -= g.transpose() * sg;
    st.K[i] = 0.5 * (k + k.transpose());
    track(st.K[i]);

    const Vector bl = b.transpose() * st.lambda[i + 1];
    st.lambda[i] = a.transpose() * st.lambda[i + 1] - g.transpose() * st.solve[i].solve(bl);

    st.G[i] = std::move(g);
    st.Bd[i] = b;
  }
  return st;
}

ExactStep forward_rollout(const RiccatiState& state, const CostBlocks& blocks,
                          const Linearization& lin) {
  const int n = blocks.depth();
  const Network& net = blocks.net();

  ExactStep step;
  step.dtheta.resize(net.param_dim());
  step.dx.reserve(n + 1);
  step.dx.push_back(Matrix::Zero(blocks.batch(), net.state_dim(0)));
  step.non_descent_possible = state.any_indefinite;

  for (int i = 0; i < n; ++i) {
    const int p = net.layer_param_dim(i);
    Matrix next = lin.A(i, step.dx.back());
    if (p > 0) {
      Vector rhs = state.G[i] * flatten_rows(step.dx.back());
      rhs.noalias() += state.Bd[i].transpose() * state.lambda[i + 1];
      Vector dth = -state.solve[i].solve(rhs);
      step.dtheta.segment(net.param_offset(i), p) = dth;
      next += lin.B(i, dth);
    }
    step.dx.push_back(std::move(next));
  }
  step.objective_value = lqr_objective(blocks, lin, step.dtheta);
  return step;
}

double lqr_objective(const CostBlocks& blocks, const Linearization& lin, ConstVecRef dtheta) {
  const int n = blocks.depth();
  const Network& net = blocks.net();
  Matrix dx = Matrix::Zero(blocks.batch(), net.state_dim(0));
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const int p = net.layer_param_dim(i);
    ConstVecRef dth = dtheta.segment(net.param_offset(i), p);
    acc += blocks.stage_cost(i, dx, dth);
    Matrix next = lin.A(i, dx);
    if (p > 0) next += lin.B(i, dth);
    dx = std::move(next);
  }
  return acc + blocks.terminal_cost(dx);
}

ExactStep exact_step(const Network& net, const DivergenceSpec& spec, ConstVecRef theta,
                     const Matrix& x0, LossPtr loss, double damping, ResidualPtr residual) {
  auto traj = std::make_shared<const Trajectory>(forward(net, theta, x0));
  Linearization lin(net, traj);
  DivergencePtr div = bind_divergence(spec, net, traj, loss, residual);
  auto adj = std::make_shared<AdjointState>(adjoint_recursion(*div, lin));
  CostBlocksPtr blocks =
      cost_blocks(net, traj, div, loss, adj, Vector::Constant(net.depth(), damping));
  RiccatiState st = riccati_backward(*blocks, lin);
  return forward_rollout(st, *blocks, lin);
}

double KktResiduals::max_relative() const {
  return std::max(stationarity_theta, stationarity_x) / (1.0 + scale);
}

KktResiduals kkt_residuals(const RiccatiState& state, const CostBlocks& blocks,
                           const Linearization& lin, const ExactStep& step) {
  const int n = blocks.depth();
  const Network& net = blocks.net();

  KktResiduals res;
  res.scale = step.dtheta.cwiseAbs().maxCoeff() + flatten_rows(blocks.gN()).cwiseAbs().maxCoeff();

  // q_i = K_i dx_i + lambda_i; the terminal identity q_N = Q_N dx_N + g_N
  // holds by the boundary conditions K_N = Q_N, lambda_N = g_N.
  auto q = [&](int i) -> Vector {
    return state.K[i] * flatten_rows(step.dx[i]) + state.lambda[i];
  };

  for (int i = 0; i < n; ++i) {
    const int p = net.layer_param_dim(i);
    const Vector qn = q(i + 1);
    const Matrix qmat = unflatten_rows(qn, blocks.batch(), net.state_dim(i + 1));
    if (p > 0) {
      ConstVecRef dth = step.dtheta.segment(net.param_offset(i), p);
      Vector r = blocks.R(i, dth) + blocks.M(i, step.dx[i]) + lin.Bt(i, qmat);
      res.stationarity_theta = std::max(res.stationarity_theta, r.cwiseAbs().maxCoeff());
    }
    if (i >= 1) {
      ConstVecRef dth = step.dtheta.segment(net.param_offset(i), p);
      Matrix r = blocks.Q(i, step.dx[i]) + lin.At(i, qmat);
      if (p > 0) r += blocks.Mt(i, dth);
      r -= unflatten_rows(q(i), blocks.batch(), net.state_dim(i));
      res.stationarity_x = std::max(res.stationarity_x, r.cwiseAbs().maxCoeff());
    }
  }
  return res;
}

}  // namespace llqr
