#pragma once

#include <memory>

#include "llqr/network.hpp"

namespace llqr {

// Exact Jacobian actions of every layer map at the trajectory's basepoint.
// A_i acts on batched state perturbations row-wise (block-diagonal over
// samples); B_i maps the shared parameter perturbation to a batched state
// perturbation and back.
class Linearization {
 public:
  Linearization(Network net, TrajectoryPtr traj);

  const Network& net() const { return net_; }
  const Trajectory& traj() const { return *traj_; }
  TrajectoryPtr traj_ptr() const { return traj_; }
  int depth() const { return net_.depth(); }
  int batch() const { return traj_->batch; }

  Matrix A(int i, const Matrix& dx) const;
  Matrix At(int i, const Matrix& w) const;
  Matrix B(int i, ConstVecRef dtheta) const;
  Vector Bt(int i, const Matrix& w) const;

  // Explicit matrices over the flattened batch-state, for small problems.
  // dense_A(i): (B*d_{i+1}) x (B*d_i), block-diagonal over samples.
  // dense_B(i): (B*d_{i+1}) x p_i.
  Matrix dense_A(int i, int cap = kDenseCap) const;
  Matrix dense_B(int i, int cap = kDenseCap) const;

  // Rolls a parameter perturbation through the linearized dynamics with
  // dx_0 = 0; returns dx_0..dx_N.
  std::vector<Matrix> roll(ConstVecRef dtheta) const;

 private:
  Network net_;
  TrajectoryPtr traj_;
};

using LinearizationPtr = std::shared_ptr<const Linearization>;

}  // namespace llqr
