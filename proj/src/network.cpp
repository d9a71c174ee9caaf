#include "llqr/network.hpp"

#include <cmath>
#include <utility>

namespace llqr {

Network::Network(std::vector<LayerPtr> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) {
    throw DimensionError("network needs at least one layer");
  }
  offsets_.resize(layers_.size() + 1);
  offsets_[0] = 0;
  for (size_t i = 0; i < layers_.size(); ++i) {
    if (i + 1 < layers_.size() &&
        layers_[i]->out_dim() != layers_[i + 1]->in_dim()) {
      throw DimensionError("layer " + std::to_string(i) + " out_dim " +
                           std::to_string(layers_[i]->out_dim()) +
                           " does not chain with layer " + std::to_string(i + 1) +
                           " in_dim " + std::to_string(layers_[i + 1]->in_dim()));
    }
    offsets_[i + 1] = offsets_[i] + layers_[i]->param_dim();
  }
}

int Network::state_dim(int i) const {
  return i == 0 ? layers_.front()->in_dim() : layers_[i - 1]->out_dim();
}

ConstVecRef Network::theta_slice(ConstVecRef theta, int i) const {
  return theta.segment(offsets_[i], layer_param_dim(i));
}

std::vector<GroupLayout> Network::param_groups() const {
  std::vector<GroupLayout> out;
  for (int i = 0; i < depth(); ++i) {
    for (const ParamGroup& g : layers_[i]->param_groups()) {
      out.push_back(GroupLayout{i, g.is_kernel, offsets_[i] + g.offset, g.rows, g.cols});
    }
  }
  return out;
}

Trajectory forward(const Network& net, ConstVecRef theta, const Matrix& x0) {
  if (theta.size() != net.param_dim()) {
    throw DimensionError("theta length " + std::to_string(theta.size()) +
                         " does not match param layout " + std::to_string(net.param_dim()));
  }
  if (x0.cols() != net.in_dim()) {
    throw DimensionError("x0 has " + std::to_string(x0.cols()) +
                         " features, layer 0 expects " + std::to_string(net.in_dim()));
  }
  Trajectory traj;
  traj.theta = theta;
  traj.batch = static_cast<int>(x0.rows());
  traj.x.reserve(net.depth() + 1);
  traj.x.push_back(x0);
  for (int i = 0; i < net.depth(); ++i) {
    traj.x.push_back(net.layer(i).forward(traj.x.back(), net.theta_slice(theta, i)));
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Losses

double SquaredErrorLoss::value(const Matrix& xN) const {
  return 0.5 * (xN - targets_).squaredNorm() / xN.rows();
}

Matrix SquaredErrorLoss::grad(const Matrix& xN) const {
  return (xN - targets_) / xN.rows();
}

Matrix SquaredErrorLoss::hess_action(const Matrix& xN, const Matrix& dx) const {
  return dx / xN.rows();
}

std::shared_ptr<const TerminalLoss> SquaredErrorLoss::restrict_rows(int begin, int count) const {
  return std::make_shared<SquaredErrorLoss>(targets_.middleRows(begin, count));
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    Eigen::ArrayXd z = logits.row(b).transpose().array();
    z -= z.maxCoeff();
    Eigen::ArrayXd e = z.exp();
    p.row(b) = (e / e.sum()).matrix().transpose();
  }
  return p;
}

namespace {

double logsumexp_row(const Eigen::RowVectorXd& z) {
  double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

}  // namespace

double SoftmaxCrossEntropyLoss::value(const Matrix& xN) const {
  double acc = 0;
  for (Eigen::Index b = 0; b < xN.rows(); ++b) {
    acc += logsumexp_row(xN.row(b)) - xN(b, labels_(b));
  }
  return acc / xN.rows();
}

Matrix SoftmaxCrossEntropyLoss::grad(const Matrix& xN) const {
  Matrix g = softmax_rows(xN);
  for (Eigen::Index b = 0; b < xN.rows(); ++b) {
    g(b, labels_(b)) -= 1.0;
  }
  return g / xN.rows();
}

Matrix SoftmaxCrossEntropyLoss::hess_action(const Matrix& xN, const Matrix& dx) const {
  Matrix pi = softmax_rows(xN);
  Matrix out(xN.rows(), xN.cols());
  for (Eigen::Index b = 0; b < xN.rows(); ++b) {
    double inner = pi.row(b).dot(dx.row(b));
    out.row(b) = (pi.row(b).array() * (dx.row(b).array() - inner)).matrix();
  }
  return out / xN.rows();
}

std::shared_ptr<const TerminalLoss> SoftmaxCrossEntropyLoss::restrict_rows(int begin,
                                                                           int count) const {
  return std::make_shared<SoftmaxCrossEntropyLoss>(labels_.segment(begin, count));
}

double LinearLoss::value(const Matrix& xN) const {
  return (xN * c_).mean();
}

Matrix LinearLoss::grad(const Matrix& xN) const {
  Matrix g(xN.rows(), xN.cols());
  g.rowwise() = c_.transpose() / xN.rows();
  return g;
}

Matrix LinearLoss::hess_action(const Matrix& xN, const Matrix&) const {
  return Matrix::Zero(xN.rows(), xN.cols());
}

std::shared_ptr<const TerminalLoss> LinearLoss::restrict_rows(int, int) const {
  return std::make_shared<LinearLoss>(c_);
}

// ---------------------------------------------------------------------------

Vector gradient(const Network& net, const TerminalLoss& loss, const Trajectory& traj) {
  Vector g(net.param_dim());
  Matrix w = loss.grad(traj.terminal());
  for (int i = net.depth() - 1; i >= 0; --i) {
    ConstVecRef th = net.theta_slice(traj.theta, i);
    if (net.layer_param_dim(i) > 0) {
      g.segment(net.param_offset(i), net.layer_param_dim(i)) =
          net.layer(i).vjp_theta(traj.x[i], th, w);
    }
    w = net.layer(i).vjp_x(traj.x[i], th, w);
  }
  return g;
}

}  // namespace llqr
