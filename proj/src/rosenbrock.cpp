#include "llqr/rosenbrock.hpp"

#include <memory>

namespace llqr {

double rosenbrock(double a, double b, double x, double y) {
  const double u = a - x;
  const double v = y - x * x;
  return u * u + b * v * v;
}

Vector rosenbrock_grad(double a, double b, double x, double y) {
  const double v = y - x * x;
  Vector g(2);
  g << -2.0 * (a - x) - 4.0 * b * x * v, 2.0 * b * v;
  return g;
}

Matrix rosenbrock_hess(double a, double b, double x, double y) {
  (void)a;
  Matrix h(2, 2);
  h(0, 0) = 2.0 - 4.0 * b * (y - x * x) + 8.0 * b * x * x;
  h(0, 1) = -4.0 * b * x;
  h(1, 0) = h(0, 1);
  h(1, 1) = 2.0 * b;
  return h;
}

// ---------------------------------------------------------------------------
// Feature layer: u = [a^2 - 2 a x, x^2, b], parameter theta = x.

Matrix RosenbrockFeatureLayer::forward(const Matrix& x, ConstVecRef theta) const {
  Matrix u(x.rows(), 3);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    u(r, 0) = a_ * a_ - 2.0 * a_ * theta(0);
    u(r, 1) = theta(0) * theta(0);
    u(r, 2) = b_;
  }
  return u;
}

Matrix RosenbrockFeatureLayer::jvp_x(const Matrix& x, ConstVecRef, const Matrix&) const {
  return Matrix::Zero(x.rows(), 3);
}

Matrix RosenbrockFeatureLayer::vjp_x(const Matrix& x, ConstVecRef, const Matrix&) const {
  return Matrix::Zero(x.rows(), 1);
}

Matrix RosenbrockFeatureLayer::jvp_theta(const Matrix& x, ConstVecRef theta,
                                         ConstVecRef dtheta) const {
  Matrix du(x.rows(), 3);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    du(r, 0) = -2.0 * a_ * dtheta(0);
    du(r, 1) = 2.0 * theta(0) * dtheta(0);
    du(r, 2) = 0.0;
  }
  return du;
}

Vector RosenbrockFeatureLayer::vjp_theta(const Matrix&, ConstVecRef theta, const Matrix& w) const {
  Vector g(1);
  g(0) = (-2.0 * a_ * w.col(0) + 2.0 * theta(0) * w.col(1)).sum();
  return g;
}

Matrix RosenbrockFeatureLayer::hess_xx(const Matrix& x, ConstVecRef, const Matrix&,
                                       const Matrix&) const {
  return Matrix::Zero(x.rows(), 1);
}

Vector RosenbrockFeatureLayer::hess_tt(const Matrix&, ConstVecRef, const Matrix& p,
                                       ConstVecRef dtheta) const {
  // Only u2 = x^2 is curved: d^2 u2 / dx^2 = 2.
  Vector g(1);
  g(0) = 2.0 * p.col(1).sum() * dtheta(0);
  return g;
}

// ---------------------------------------------------------------------------
// Objective layer: f(u, y) = u1 + u2 + u3 (y - u2)^2, parameter theta = y.

Matrix RosenbrockObjectiveLayer::forward(const Matrix& u, ConstVecRef theta) const {
  Matrix out(u.rows(), 1);
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    const double v = theta(0) - u(r, 1);
    out(r, 0) = u(r, 0) + u(r, 1) + u(r, 2) * v * v;
  }
  return out;
}

Matrix RosenbrockObjectiveLayer::jvp_x(const Matrix& u, ConstVecRef theta,
                                       const Matrix& du) const {
  Matrix out(u.rows(), 1);
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    const double v = theta(0) - u(r, 1);
    out(r, 0) = du(r, 0) + (1.0 - 2.0 * u(r, 2) * v) * du(r, 1) + v * v * du(r, 2);
  }
  return out;
}

Matrix RosenbrockObjectiveLayer::vjp_x(const Matrix& u, ConstVecRef theta, const Matrix& w) const {
  Matrix out(u.rows(), 3);
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    const double v = theta(0) - u(r, 1);
    out(r, 0) = w(r, 0);
    out(r, 1) = (1.0 - 2.0 * u(r, 2) * v) * w(r, 0);
    out(r, 2) = v * v * w(r, 0);
  }
  return out;
}

Matrix RosenbrockObjectiveLayer::jvp_theta(const Matrix& u, ConstVecRef theta,
                                           ConstVecRef dtheta) const {
  Matrix out(u.rows(), 1);
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    out(r, 0) = 2.0 * u(r, 2) * (theta(0) - u(r, 1)) * dtheta(0);
  }
  return out;
}

Vector RosenbrockObjectiveLayer::vjp_theta(const Matrix& u, ConstVecRef theta,
                                           const Matrix& w) const {
  double acc = 0;
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    acc += 2.0 * u(r, 2) * (theta(0) - u(r, 1)) * w(r, 0);
  }
  Vector g(1);
  g(0) = acc;
  return g;
}

Matrix RosenbrockObjectiveLayer::hess_xx(const Matrix& u, ConstVecRef theta, const Matrix& p,
                                         const Matrix& du) const {
  // Nonzero second derivatives: d2f/du2^2 = 2 u3, d2f/du2 du3 = -2 (y - u2).
  Matrix out = Matrix::Zero(u.rows(), 3);
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    const double v = theta(0) - u(r, 1);
    out(r, 1) = p(r, 0) * (2.0 * u(r, 2) * du(r, 1) - 2.0 * v * du(r, 2));
    out(r, 2) = p(r, 0) * (-2.0 * v * du(r, 1));
  }
  return out;
}

Matrix RosenbrockObjectiveLayer::hess_xt(const Matrix& u, ConstVecRef theta, const Matrix& p,
                                         ConstVecRef dtheta) const {
  // d/dy of df/du = [0, -2 u3, 2 (y - u2)].
  Matrix out = Matrix::Zero(u.rows(), 3);
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    const double v = theta(0) - u(r, 1);
    out(r, 1) = p(r, 0) * (-2.0 * u(r, 2)) * dtheta(0);
    out(r, 2) = p(r, 0) * 2.0 * v * dtheta(0);
  }
  return out;
}

Vector RosenbrockObjectiveLayer::hess_tx(const Matrix& u, ConstVecRef theta, const Matrix& p,
                                         const Matrix& du) const {
  double acc = 0;
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    const double v = theta(0) - u(r, 1);
    acc += p(r, 0) * (-2.0 * u(r, 2) * du(r, 1) + 2.0 * v * du(r, 2));
  }
  Vector g(1);
  g(0) = acc;
  return g;
}

Vector RosenbrockObjectiveLayer::hess_tt(const Matrix& u, ConstVecRef, const Matrix& p,
                                         ConstVecRef dtheta) const {
  double acc = 0;
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    acc += p(r, 0) * 2.0 * u(r, 2) * dtheta(0);
  }
  Vector g(1);
  g(0) = acc;
  return g;
}

// ---------------------------------------------------------------------------
// Single-layer form.

Matrix RosenbrockScalarLayer::forward(const Matrix& x, ConstVecRef theta) const {
  Matrix out(x.rows(), 1);
  out.setConstant(rosenbrock(a_, b_, theta(0), theta(1)));
  return out;
}

Matrix RosenbrockScalarLayer::jvp_x(const Matrix& x, ConstVecRef, const Matrix&) const {
  return Matrix::Zero(x.rows(), 1);
}

Matrix RosenbrockScalarLayer::vjp_x(const Matrix& x, ConstVecRef, const Matrix&) const {
  return Matrix::Zero(x.rows(), 1);
}

Matrix RosenbrockScalarLayer::jvp_theta(const Matrix& x, ConstVecRef theta,
                                        ConstVecRef dtheta) const {
  Vector g = rosenbrock_grad(a_, b_, theta(0), theta(1));
  Matrix out(x.rows(), 1);
  out.setConstant(g.dot(dtheta));
  return out;
}

Vector RosenbrockScalarLayer::vjp_theta(const Matrix&, ConstVecRef theta, const Matrix& w) const {
  return rosenbrock_grad(a_, b_, theta(0), theta(1)) * w.col(0).sum();
}

Matrix RosenbrockScalarLayer::hess_xx(const Matrix& x, ConstVecRef, const Matrix&,
                                      const Matrix&) const {
  return Matrix::Zero(x.rows(), 1);
}

Vector RosenbrockScalarLayer::hess_tt(const Matrix&, ConstVecRef theta, const Matrix& p,
                                      ConstVecRef dtheta) const {
  return rosenbrock_hess(a_, b_, theta(0), theta(1)) * dtheta * p.col(0).sum();
}

// ---------------------------------------------------------------------------

Network rosenbrock_two_layer_net(double a, double b) {
  return Network({std::make_shared<RosenbrockFeatureLayer>(a, b),
                  std::make_shared<RosenbrockObjectiveLayer>()});
}

Network rosenbrock_single_layer_net(double a, double b) {
  return Network({std::make_shared<RosenbrockScalarLayer>(a, b)});
}

Matrix rosenbrock_input() { return Matrix::Zero(1, 1); }

LossPtr rosenbrock_loss() { return std::make_shared<LinearLoss>(Vector::Ones(1)); }

}  // namespace llqr
