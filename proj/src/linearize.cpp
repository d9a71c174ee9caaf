#include "llqr/linearize.hpp"

#include <utility>

namespace llqr {

Linearization::Linearization(Network net, TrajectoryPtr traj)
    : net_(std::move(net)), traj_(std::move(traj)) {
  if (static_cast<int>(traj_->x.size()) != net_.depth() + 1) {
    throw DimensionError("trajectory depth does not match network");
  }
}

Matrix Linearization::A(int i, const Matrix& dx) const {
  return net_.layer(i).jvp_x(traj_->x[i], net_.theta_slice(traj_->theta, i), dx);
}

Matrix Linearization::At(int i, const Matrix& w) const {
  return net_.layer(i).vjp_x(traj_->x[i], net_.theta_slice(traj_->theta, i), w);
}

Matrix Linearization::B(int i, ConstVecRef dtheta) const {
  return net_.layer(i).jvp_theta(traj_->x[i], net_.theta_slice(traj_->theta, i), dtheta);
}

Vector Linearization::Bt(int i, const Matrix& w) const {
  return net_.layer(i).vjp_theta(traj_->x[i], net_.theta_slice(traj_->theta, i), w);
}

Matrix Linearization::dense_A(int i, int cap) const {
  const int b = batch();
  const int din = net_.state_dim(i);
  const int dout = net_.state_dim(i + 1);
  if (b * din > cap || b * dout > cap) {
    throw CapacityError("dense_A: flattened state exceeds cap at layer " + std::to_string(i));
  }
  Matrix out = Matrix::Zero(b * dout, b * din);
  // Broadcasting one basis direction to every row materializes each sample's
  // block in a single action.
  for (int j = 0; j < din; ++j) {
    Matrix dx = Matrix::Zero(b, din);
    dx.col(j).setOnes();
    Matrix col = A(i, dx);
    for (int s = 0; s < b; ++s) {
      out.block(s * dout, s * din + j, dout, 1) = col.row(s).transpose();
    }
  }
  return out;
}

Matrix Linearization::dense_B(int i, int cap) const {
  const int b = batch();
  const int p = net_.layer_param_dim(i);
  const int dout = net_.state_dim(i + 1);
  if (b * dout > cap || p > cap) {
    throw CapacityError("dense_B: dims exceed cap at layer " + std::to_string(i));
  }
  Matrix out(b * dout, p);
  Vector e = Vector::Zero(p);
  for (int j = 0; j < p; ++j) {
    e(j) = 1.0;
    out.col(j) = flatten_rows(B(i, e));
    e(j) = 0.0;
  }
  return out;
}

std::vector<Matrix> Linearization::roll(ConstVecRef dtheta) const {
  std::vector<Matrix> dx;
  dx.reserve(depth() + 1);
  dx.push_back(Matrix::Zero(batch(), net_.state_dim(0)));
  for (int i = 0; i < depth(); ++i) {
    Matrix next = A(i, dx.back());
    if (net_.layer_param_dim(i) > 0) {
      next += B(i, dtheta.segment(net_.param_offset(i), net_.layer_param_dim(i)));
    }
    dx.push_back(std::move(next));
  }
  return dx;
}

}  // namespace llqr
