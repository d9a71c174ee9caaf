#pragma once

#include "llqr/network.hpp"

namespace llqr {

// R_{a,b}(x, y) = (a - x)^2 + b (y - x^2)^2 and its analytic derivatives.
double rosenbrock(double a, double b, double x, double y);
Vector rosenbrock_grad(double a, double b, double x, double y);
Matrix rosenbrock_hess(double a, double b, double x, double y);

// Two-layer reformulation: a feature layer (parameter x) producing
// u = [a^2 - 2ax, x^2, b] from a dummy input, then an objective layer
// (parameter y) computing (u1 + u2) + u3 (y - u2)^2. The terminal loss reads
// the scalar output off, so the network value IS R_{a,b}(x, y).
class RosenbrockFeatureLayer final : public Layer {
 public:
  explicit RosenbrockFeatureLayer(double a, double b) : a_(a), b_(b) {}
  LayerKind kind() const override { return LayerKind::Composite; }
  std::string name() const override { return "rosenbrock_features"; }
  int in_dim() const override { return 1; }
  int out_dim() const override { return 3; }
  int param_dim() const override { return 1; }

  Matrix forward(const Matrix& x, ConstVecRef theta) const override;
  Matrix jvp_x(const Matrix& x, ConstVecRef theta, const Matrix& dx) const override;
  Matrix vjp_x(const Matrix& x, ConstVecRef theta, const Matrix& w) const override;
  Matrix jvp_theta(const Matrix& x, ConstVecRef theta, ConstVecRef dtheta) const override;
  Vector vjp_theta(const Matrix& x, ConstVecRef theta, const Matrix& w) const override;
  Matrix hess_xx(const Matrix& x, ConstVecRef theta, const Matrix& p,
                 const Matrix& dx) const override;
  Vector hess_tt(const Matrix& x, ConstVecRef theta, const Matrix& p,
                 ConstVecRef dtheta) const override;

 private:
  double a_;
  double b_;
};

class RosenbrockObjectiveLayer final : public Layer {
 public:
  RosenbrockObjectiveLayer() = default;
  LayerKind kind() const override { return LayerKind::Composite; }
  std::string name() const override { return "rosenbrock_objective"; }
  int in_dim() const override { return 3; }
  int out_dim() const override { return 1; }
  int param_dim() const override { return 1; }

  Matrix forward(const Matrix& u, ConstVecRef theta) const override;
  Matrix jvp_x(const Matrix& u, ConstVecRef theta, const Matrix& du) const override;
  Matrix vjp_x(const Matrix& u, ConstVecRef theta, const Matrix& w) const override;
  Matrix jvp_theta(const Matrix& u, ConstVecRef theta, ConstVecRef dtheta) const override;
  Vector vjp_theta(const Matrix& u, ConstVecRef theta, const Matrix& w) const override;
  Matrix hess_xx(const Matrix& u, ConstVecRef theta, const Matrix& p,
                 const Matrix& du) const override;
  Matrix hess_xt(const Matrix& u, ConstVecRef theta, const Matrix& p,
                 ConstVecRef dtheta) const override;
  Vector hess_tx(const Matrix& u, ConstVecRef theta, const Matrix& p,
                 const Matrix& du) const override;
  Vector hess_tt(const Matrix& u, ConstVecRef theta, const Matrix& p,
                 ConstVecRef dtheta) const override;
};

// Single layer mapping theta = (x, y) straight to the scalar R_{a,b}(x, y).
class RosenbrockScalarLayer final : public Layer {
 public:
  RosenbrockScalarLayer(double a, double b) : a_(a), b_(b) {}
  LayerKind kind() const override { return LayerKind::Composite; }
  std::string name() const override { return "rosenbrock_scalar"; }
  int in_dim() const override { return 1; }
  int out_dim() const override { return 1; }
  int param_dim() const override { return 2; }

  Matrix forward(const Matrix& x, ConstVecRef theta) const override;
  Matrix jvp_x(const Matrix& x, ConstVecRef theta, const Matrix& dx) const override;
  Matrix vjp_x(const Matrix& x, ConstVecRef theta, const Matrix& w) const override;
  Matrix jvp_theta(const Matrix& x, ConstVecRef theta, ConstVecRef dtheta) const override;
  Vector vjp_theta(const Matrix& x, ConstVecRef theta, const Matrix& w) const override;
  Matrix hess_xx(const Matrix& x, ConstVecRef theta, const Matrix& p,
                 const Matrix& dx) const override;
  Vector hess_tt(const Matrix& x, ConstVecRef theta, const Matrix& p,
                 ConstVecRef dtheta) const override;

 private:
  double a_;
  double b_;
};

// theta = [x, y]; the dummy input is a single zero.
Network rosenbrock_two_layer_net(double a = 1.0, double b = 100.0);
Network rosenbrock_single_layer_net(double a = 1.0, double b = 100.0);
Matrix rosenbrock_input();  // 1x1 zero
LossPtr rosenbrock_loss();  // reads off the scalar output

}  // namespace llqr
