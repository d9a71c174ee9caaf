#include "llqr/oracle.hpp"

#include <cmath>

#include "llqr/linearize.hpp"

namespace llqr {

Vector newton_step_dense(const DenseCurvature& c, double lambda) {
  Matrix h = c.H;
  h.diagonal().array() += lambda;
  Eigen::FullPivLU<Matrix> lu(h);
  if (!lu.isInvertible()) {
    throw SolverError("newton_step_dense: H + lambda I is singular");
  }
  return lu.solve(-c.g);
}

Vector diag_newton_step(const DenseCurvature& c, double lambda) {
  Vector d = c.H.diagonal().array() + lambda;
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    if (d(j) <= 0.0) {
      throw SolverError("diag_newton_step: nonpositive damped diagonal at index " +
                        std::to_string(j));
    }
  }
  return (-c.g.array() / d.array()).matrix();
}

DenseCurvature fisher_dense(const Network& net, ConstVecRef theta, const Matrix& x0,
                            OutputHead head, const TerminalLoss& loss, int cap) {
  if (net.param_dim() > cap) {
    throw CapacityError("fisher_dense: param dim exceeds cap");
  }
  auto traj = std::make_shared<const Trajectory>(forward(net, theta, x0));
  Linearization lin(net, traj);
  const int batch = traj->batch;
  const int p = net.param_dim();
  const int c = net.out_dim();

  auto pullback = [&](const Matrix& w) {
    Matrix cur = w;
    Vector g(p);
    for (int i = net.depth() - 1; i >= 0; --i) {
      if (net.layer_param_dim(i) > 0) {
        g.segment(net.param_offset(i), net.layer_param_dim(i)) = lin.Bt(i, cur);
      }
      cur = lin.At(i, cur);
    }
    return g;
  };

  DenseCurvature out;
  out.H = Matrix::Zero(p, p);
  out.provenance = CurvatureProvenance::Analytic;

  if (head == OutputHead::Softmax) {
    const Matrix pi = softmax_rows(traj->terminal());
    for (int b = 0; b < batch; ++b) {
      for (int y = 0; y < c; ++y) {
        Matrix w = Matrix::Zero(batch, c);
        w.row(b) = -pi.row(b);
        w(b, y) += 1.0;  // score of outcome y in logit space
        Vector s = pullback(w);
        out.H.noalias() += (pi(b, y) / batch) * (s * s.transpose());
      }
    }
  } else {
    // Unit-variance Gaussian mean head: F = (1/B) sum_b J_b^T J_b.
    for (int b = 0; b < batch; ++b) {
      for (int y = 0; y < c; ++y) {
        Matrix w = Matrix::Zero(batch, c);
        w(b, y) = 1.0;
        Vector s = pullback(w);
        out.H.noalias() += (1.0 / batch) * (s * s.transpose());
      }
    }
  }

  out.H = 0.5 * (out.H + out.H.transpose()).eval();
  out.g = gradient(net, loss, *traj);
  return out;
}

}  // namespace llqr
