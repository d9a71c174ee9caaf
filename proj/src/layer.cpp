#include "llqr/layer.hpp"

#include <cmath>
#include <random>

namespace llqr {

Matrix Layer::jvp_theta(const Matrix& x, ConstVecRef, ConstVecRef dtheta) const {
  if (param_dim() != 0 || dtheta.size() != 0) {
    throw DimensionError("jvp_theta not implemented for layer " + name());
  }
  return Matrix::Zero(x.rows(), out_dim());
}

Vector Layer::vjp_theta(const Matrix&, ConstVecRef, const Matrix&) const {
  if (param_dim() != 0) {
    throw DimensionError("vjp_theta not implemented for layer " + name());
  }
  return Vector::Zero(0);
}

Matrix Layer::hess_xt(const Matrix& x, ConstVecRef, const Matrix&, ConstVecRef) const {
  return Matrix::Zero(x.rows(), in_dim());
}

Vector Layer::hess_tx(const Matrix&, ConstVecRef, const Matrix&, const Matrix&) const {
  return Vector::Zero(param_dim());
}

Vector Layer::hess_tt(const Matrix&, ConstVecRef, const Matrix&, ConstVecRef) const {
  return Vector::Zero(param_dim());
}

// ---------------------------------------------------------------------------
// AffineLayer

AffineLayer::AffineLayer(int in, int out, bool bias) : in_(in), out_(out), bias_(bias) {
  if (in <= 0 || out <= 0) {
    throw DimensionError("affine layer dims must be positive");
  }
}

Eigen::Map<const Matrix> AffineLayer::weight(ConstVecRef theta) const {
  return Eigen::Map<const Matrix>(theta.data(), out_, in_);
}

Matrix AffineLayer::forward(const Matrix& x, ConstVecRef theta) const {
  Matrix y = x * weight(theta).transpose();
  if (bias_) {
    y.rowwise() += theta.tail(out_).transpose();
  }
  return y;
}

Matrix AffineLayer::jvp_x(const Matrix&, ConstVecRef theta, const Matrix& dx) const {
  return dx * weight(theta).transpose();
}

Matrix AffineLayer::vjp_x(const Matrix&, ConstVecRef theta, const Matrix& w) const {
  return w * weight(theta);
}

Matrix AffineLayer::jvp_theta(const Matrix& x, ConstVecRef, ConstVecRef dtheta) const {
  Eigen::Map<const Matrix> dw(dtheta.data(), out_, in_);
  Matrix y = x * dw.transpose();
  if (bias_) {
    y.rowwise() += dtheta.tail(out_).transpose();
  }
  return y;
}

Vector AffineLayer::vjp_theta(const Matrix& x, ConstVecRef, const Matrix& w) const {
  Vector g(param_dim());
  Eigen::Map<Matrix> gw(g.data(), out_, in_);
  gw = w.transpose() * x;
  if (bias_) {
    g.tail(out_) = w.colwise().sum().transpose();
  }
  return g;
}

Matrix AffineLayer::hess_xx(const Matrix& x, ConstVecRef, const Matrix&, const Matrix&) const {
  return Matrix::Zero(x.rows(), in_);
}

// s = sum_b p_b^T (W x_b + b): d/dx grad wrt theta-direction dW is p dW.
Matrix AffineLayer::hess_xt(const Matrix&, ConstVecRef, const Matrix& p,
                            ConstVecRef dtheta) const {
  Eigen::Map<const Matrix> dw(dtheta.data(), out_, in_);
  return p * dw;
}

Vector AffineLayer::hess_tx(const Matrix&, ConstVecRef, const Matrix& p,
                            const Matrix& dx) const {
  Vector g = Vector::Zero(param_dim());
  Eigen::Map<Matrix> gw(g.data(), out_, in_);
  gw = p.transpose() * dx;
  return g;
}

std::vector<ParamGroup> AffineLayer::param_groups() const {
  std::vector<ParamGroup> groups;
  groups.push_back(ParamGroup{true, 0, out_, in_});
  if (bias_) {
    groups.push_back(ParamGroup{false, out_ * in_, out_, 1});
  }
  return groups;
}

// ---------------------------------------------------------------------------
// ElementwiseLayer

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "relu") return Activation::Relu;
  if (s == "softplus") return Activation::Softplus;
  throw ConfigError("unknown activation: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Relu: return "relu";
    case Activation::Softplus: return "softplus";
  }
  return "?";
}

Matrix ElementwiseLayer::forward(const Matrix& x, ConstVecRef) const {
  switch (act_) {
    case Activation::Identity: return x;
    case Activation::Tanh: return x.array().tanh().matrix();
    case Activation::Sigmoid: return (1.0 / (1.0 + (-x.array()).exp())).matrix();
    case Activation::Relu: return x.cwiseMax(0.0);
    case Activation::Softplus:
      // log(1+e^x) = max(x,0) + log1p(e^-|x|)
      return (x.array().max(0.0) + (-x.array().abs()).exp().log1p()).matrix();
  }
  return x;
}

Matrix ElementwiseLayer::d1(const Matrix& x) const {
  switch (act_) {
    case Activation::Identity: return Matrix::Ones(x.rows(), x.cols());
    case Activation::Tanh: {
      Eigen::ArrayXXd t = x.array().tanh();
      return (1.0 - t.square()).matrix();
    }
    case Activation::Sigmoid: {
      Matrix s = forward(x, Vector());
      return (s.array() * (1.0 - s.array())).matrix();
    }
    case Activation::Relu: return (x.array() > 0.0).cast<double>().matrix();
    case Activation::Softplus: return (1.0 / (1.0 + (-x.array()).exp())).matrix();
  }
  return Matrix::Ones(x.rows(), x.cols());
}

Matrix ElementwiseLayer::d2(const Matrix& x) const {
  switch (act_) {
    case Activation::Identity: return Matrix::Zero(x.rows(), x.cols());
    case Activation::Tanh: {
      Eigen::ArrayXXd t = x.array().tanh();
      return (-2.0 * t * (1.0 - t.square())).matrix();
    }
    case Activation::Sigmoid: {
      Matrix s = forward(x, Vector());
      return (s.array() * (1.0 - s.array()) * (1.0 - 2.0 * s.array())).matrix();
    }
    case Activation::Relu: return Matrix::Zero(x.rows(), x.cols());
    case Activation::Softplus: {
      Eigen::ArrayXXd s = 1.0 / (1.0 + (-x.array()).exp());
      return (s * (1.0 - s)).matrix();
    }
  }
  return Matrix::Zero(x.rows(), x.cols());
}

Matrix ElementwiseLayer::jvp_x(const Matrix& x, ConstVecRef, const Matrix& dx) const {
  return (d1(x).array() * dx.array()).matrix();
}

Matrix ElementwiseLayer::vjp_x(const Matrix& x, ConstVecRef, const Matrix& w) const {
  return (d1(x).array() * w.array()).matrix();
}

Matrix ElementwiseLayer::hess_xx(const Matrix& x, ConstVecRef, const Matrix& p,
                                 const Matrix& dx) const {
  return (d2(x).array() * p.array() * dx.array()).matrix();
}

// ---------------------------------------------------------------------------
// jvp_check

double JvpCheckReport::max_first_order() const {
  return std::max({jvp_x_err, jvp_theta_err, adjoint_x_err, adjoint_theta_err});
}

double JvpCheckReport::max_second_order() const {
  return std::max({hess_xx_err, hess_xt_err, hess_tx_err, hess_tt_err});
}

bool JvpCheckReport::within(double first_tol, double second_tol) const {
  return max_first_order() <= first_tol && max_second_order() <= second_tol;
}

namespace {

double rel_err(const Matrix& got, const Matrix& want) {
  double scale = 1.0 + want.cwiseAbs().maxCoeff();
  return (got - want).cwiseAbs().maxCoeff() / scale;
}

double rel_err(const Vector& got, const Vector& want) {
  double scale = 1.0 + (want.size() ? want.cwiseAbs().maxCoeff() : 0.0);
  double diff = got.size() ? (got - want).cwiseAbs().maxCoeff() : 0.0;
  return diff / scale;
}

}  // namespace

JvpCheckReport jvp_check(const Layer& layer, int batch, unsigned seed, double step) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto rand_mat = [&](int r, int c) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = gauss(rng);
    return m;
  };
  auto rand_vec = [&](int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = gauss(rng);
    return v;
  };

  const Matrix x = rand_mat(batch, layer.in_dim());
  const Vector theta = rand_vec(layer.param_dim());
  const Matrix dx = rand_mat(batch, layer.in_dim());
  const Matrix w = rand_mat(batch, layer.out_dim());
  const Matrix p = rand_mat(batch, layer.out_dim());
  const Vector dtheta = rand_vec(layer.param_dim());

  JvpCheckReport rep;

  // First order against central differences of the forward map.
  {
    Matrix fd = (layer.forward(x + step * dx, theta) - layer.forward(x - step * dx, theta)) /
                (2.0 * step);
    rep.jvp_x_err = rel_err(layer.jvp_x(x, theta, dx), fd);
  }
  if (layer.param_dim() > 0) {
    Matrix fd = (layer.forward(x, theta + step * dtheta) -
                 layer.forward(x, theta - step * dtheta)) /
                (2.0 * step);
    rep.jvp_theta_err = rel_err(layer.jvp_theta(x, theta, dtheta), fd);
  }

  // Adjoint pairing <w, J v> = <J^T w, v>.
  {
    double lhs = dot(w, layer.jvp_x(x, theta, dx));
    double rhs = (layer.vjp_x(x, theta, w).array() * dx.array()).sum();
    rep.adjoint_x_err = std::abs(lhs - rhs) / (1.0 + std::abs(lhs));
  }
  if (layer.param_dim() > 0) {
    double lhs = dot(w, layer.jvp_theta(x, theta, dtheta));
    double rhs = layer.vjp_theta(x, theta, w).dot(dtheta);
    rep.adjoint_theta_err = std::abs(lhs - rhs) / (1.0 + std::abs(lhs));
  }

  // Second order against central differences of the first-order actions.
  {
    Matrix fd = (layer.vjp_x(x + step * dx, theta, p) - layer.vjp_x(x - step * dx, theta, p)) /
                (2.0 * step);
    rep.hess_xx_err = rel_err(layer.hess_xx(x, theta, p, dx), fd);
  }
  if (layer.param_dim() > 0) {
    {
      Matrix fd = (layer.vjp_x(x, theta + step * dtheta, p) -
                   layer.vjp_x(x, theta - step * dtheta, p)) /
                  (2.0 * step);
      rep.hess_xt_err = rel_err(layer.hess_xt(x, theta, p, dtheta), fd);
    }
    {
      Vector fd = (layer.vjp_theta(x + step * dx, theta, p) -
                   layer.vjp_theta(x - step * dx, theta, p)) /
                  (2.0 * step);
      rep.hess_tx_err = rel_err(layer.hess_tx(x, theta, p, dx), fd);
    }
    {
      Vector fd = (layer.vjp_theta(x, theta + step * dtheta, p) -
                   layer.vjp_theta(x, theta - step * dtheta, p)) /
                  (2.0 * step);
      rep.hess_tt_err = rel_err(layer.hess_tt(x, theta, p, dtheta), fd);
    }
  }

  return rep;
}

}  // namespace llqr
