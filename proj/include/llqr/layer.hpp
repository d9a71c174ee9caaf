#pragma once

#include <memory>
#include <string>
#include <vector>

#include "llqr/types.hpp"

namespace llqr {

enum class LayerKind { Affine, Elementwise, Composite };

// Parameter sub-block of one layer. Kernels are matrix-shaped (rows x cols,
// stored column-major in the flat parameter vector); everything else is a
// plain vector (cols == 1).
struct ParamGroup {
  bool is_kernel = false;
  int offset = 0;  // within the layer's parameter slice
  int rows = 0;
  int cols = 1;
  int size() const { return rows * cols; }
};

// One differentiable layer map y = f(x, theta), applied row-wise over the
// batch with theta shared across rows. All derivative actions are exact and
// analytic; finite differences exist only in the test-side checker.
//
// Second-order actions are contractions of s(x, theta) = sum_b p_b^T f(x_b, theta):
//   hess_xx : dx -> d/dx [d s/dx] dx       (batched, per-row)
//   hess_xt : dtheta -> d/dtheta [d s/dx]  (batched)
//   hess_tx : dx -> d/dx [d s/dtheta]      (flat, summed over rows)
//   hess_tt : dtheta -> d/dtheta [d s/dtheta]
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual std::string name() const = 0;
  virtual int in_dim() const = 0;
  virtual int out_dim() const = 0;
  virtual int param_dim() const = 0;

  virtual Matrix forward(const Matrix& x, ConstVecRef theta) const = 0;

  virtual Matrix jvp_x(const Matrix& x, ConstVecRef theta, const Matrix& dx) const = 0;
  virtual Matrix vjp_x(const Matrix& x, ConstVecRef theta, const Matrix& w) const = 0;
  virtual Matrix jvp_theta(const Matrix& x, ConstVecRef theta, ConstVecRef dtheta) const;
  virtual Vector vjp_theta(const Matrix& x, ConstVecRef theta, const Matrix& w) const;

  virtual Matrix hess_xx(const Matrix& x, ConstVecRef theta, const Matrix& p,
                         const Matrix& dx) const = 0;
  virtual Matrix hess_xt(const Matrix& x, ConstVecRef theta, const Matrix& p,
                         ConstVecRef dtheta) const;
  virtual Vector hess_tx(const Matrix& x, ConstVecRef theta, const Matrix& p,
                         const Matrix& dx) const;
  virtual Vector hess_tt(const Matrix& x, ConstVecRef theta, const Matrix& p,
                         ConstVecRef dtheta) const;

  // Default: one vector group spanning the whole parameter slice.
  virtual std::vector<ParamGroup> param_groups() const {
    if (param_dim() == 0) return {};
    return {ParamGroup{false, 0, param_dim(), 1}};
  }
};

using LayerPtr = std::shared_ptr<const Layer>;

// y = x W^T + b, with theta = [vec(W) | b], W stored column-major (out x in).
class AffineLayer final : public Layer {
 public:
  AffineLayer(int in, int out, bool bias = true);

  LayerKind kind() const override { return LayerKind::Affine; }
  std::string name() const override { return "affine"; }
  int in_dim() const override { return in_; }
  int out_dim() const override { return out_; }
  int param_dim() const override { return out_ * in_ + (bias_ ? out_ : 0); }

  Matrix forward(const Matrix& x, ConstVecRef theta) const override;
  Matrix jvp_x(const Matrix& x, ConstVecRef theta, const Matrix& dx) const override;
  Matrix vjp_x(const Matrix& x, ConstVecRef theta, const Matrix& w) const override;
  Matrix jvp_theta(const Matrix& x, ConstVecRef theta, ConstVecRef dtheta) const override;
  Vector vjp_theta(const Matrix& x, ConstVecRef theta, const Matrix& w) const override;

  Matrix hess_xx(const Matrix& x, ConstVecRef theta, const Matrix& p,
                 const Matrix& dx) const override;
  Matrix hess_xt(const Matrix& x, ConstVecRef theta, const Matrix& p,
                 ConstVecRef dtheta) const override;
  Vector hess_tx(const Matrix& x, ConstVecRef theta, const Matrix& p,
                 const Matrix& dx) const override;

  std::vector<ParamGroup> param_groups() const override;

  Eigen::Map<const Matrix> weight(ConstVecRef theta) const;

 private:
  int in_;
  int out_;
  bool bias_;
};

enum class Activation { Identity, Tanh, Sigmoid, Relu, Softplus };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

// y = sigma(x) elementwise; no parameters.
class ElementwiseLayer final : public Layer {
 public:
  ElementwiseLayer(Activation act, int dim) : act_(act), dim_(dim) {}

  LayerKind kind() const override { return LayerKind::Elementwise; }
  std::string name() const override { return to_string(act_); }
  int in_dim() const override { return dim_; }
  int out_dim() const override { return dim_; }
  int param_dim() const override { return 0; }

  Matrix forward(const Matrix& x, ConstVecRef theta) const override;
  Matrix jvp_x(const Matrix& x, ConstVecRef theta, const Matrix& dx) const override;
  Matrix vjp_x(const Matrix& x, ConstVecRef theta, const Matrix& w) const override;
  Matrix hess_xx(const Matrix& x, ConstVecRef theta, const Matrix& p,
                 const Matrix& dx) const override;

  Activation activation() const { return act_; }

 private:
  Matrix d1(const Matrix& x) const;
  Matrix d2(const Matrix& x) const;

  Activation act_;
  int dim_;
};

// Report from the finite-difference consistency check of a layer's actions.
struct JvpCheckReport {
  double jvp_x_err = 0;
  double jvp_theta_err = 0;
  double adjoint_x_err = 0;
  double adjoint_theta_err = 0;
  double hess_xx_err = 0;
  double hess_xt_err = 0;
  double hess_tx_err = 0;
  double hess_tt_err = 0;
  double max_first_order() const;
  double max_second_order() const;
  bool within(double first_tol, double second_tol) const;
};

// Compares analytic actions against central finite differences at seeded
// random points. Report-only; never used on solver paths.
JvpCheckReport jvp_check(const Layer& layer, int batch = 3, unsigned seed = 0,
                         double step = 1e-5);

}  // namespace llqr
