#pragma once

#include <memory>
#include <vector>

#include "llqr/layer.hpp"
#include "llqr/types.hpp"

namespace llqr {

// Global view of one layer's parameter sub-block.
struct GroupLayout {
  int layer = 0;
  bool is_kernel = false;
  int offset = 0;  // into the flat parameter vector
  int rows = 0;
  int cols = 1;
  int size() const { return rows * cols; }
  friend bool operator==(const GroupLayout&, const GroupLayout&) = default;
};

// Ordered layer stack with a contiguous per-layer parameter layout.
// Cheap to copy; layers are immutable and shared.
class Network {
 public:
  explicit Network(std::vector<LayerPtr> layers);

  int depth() const { return static_cast<int>(layers_.size()); }
  int in_dim() const { return layers_.front()->in_dim(); }
  int out_dim() const { return layers_.back()->out_dim(); }
  int param_dim() const { return offsets_.back(); }
  int state_dim(int i) const;  // dim of x_i, i in [0, depth()]

  const Layer& layer(int i) const { return *layers_[static_cast<size_t>(i)]; }
  LayerPtr layer_ptr(int i) const { return layers_[static_cast<size_t>(i)]; }

  int param_offset(int i) const { return offsets_[static_cast<size_t>(i)]; }
  int layer_param_dim(int i) const { return offsets_[i + 1] - offsets_[i]; }
  ConstVecRef theta_slice(ConstVecRef theta, int i) const;

  std::vector<GroupLayout> param_groups() const;

 private:
  std::vector<LayerPtr> layers_;
  std::vector<int> offsets_;  // depth()+1 entries, exact partition of theta
};

// Batched activations x_0..x_N from one forward pass at a basepoint theta.
struct Trajectory {
  std::vector<Matrix> x;  // x[i] is (batch, d_i)
  Vector theta;
  int batch = 0;

  const Matrix& terminal() const { return x.back(); }
};

using TrajectoryPtr = std::shared_ptr<const Trajectory>;

Trajectory forward(const Network& net, ConstVecRef theta, const Matrix& x0);

// Scalar terminal loss, averaged over the batch.
class TerminalLoss {
 public:
  virtual ~TerminalLoss() = default;
  virtual double value(const Matrix& xN) const = 0;
  virtual Matrix grad(const Matrix& xN) const = 0;
  virtual Matrix hess_action(const Matrix& xN, const Matrix& dx) const = 0;
  virtual std::shared_ptr<const TerminalLoss> restrict_rows(int begin, int count) const = 0;
};

using LossPtr = std::shared_ptr<const TerminalLoss>;

// (1/2B) sum_b ||x_b - t_b||^2
class SquaredErrorLoss final : public TerminalLoss {
 public:
  explicit SquaredErrorLoss(Matrix targets) : targets_(std::move(targets)) {}
  double value(const Matrix& xN) const override;
  Matrix grad(const Matrix& xN) const override;
  Matrix hess_action(const Matrix& xN, const Matrix& dx) const override;
  std::shared_ptr<const TerminalLoss> restrict_rows(int begin, int count) const override;
  const Matrix& targets() const { return targets_; }

 private:
  Matrix targets_;
};

// (1/B) sum_b [logsumexp(x_b) - x_b[y_b]]
class SoftmaxCrossEntropyLoss final : public TerminalLoss {
 public:
  explicit SoftmaxCrossEntropyLoss(IntVector labels) : labels_(std::move(labels)) {}
  double value(const Matrix& xN) const override;
  Matrix grad(const Matrix& xN) const override;
  Matrix hess_action(const Matrix& xN, const Matrix& dx) const override;
  std::shared_ptr<const TerminalLoss> restrict_rows(int begin, int count) const override;
  const IntVector& labels() const { return labels_; }

 private:
  IntVector labels_;
};

// (1/B) sum_b c^T x_b; with c = [1] this reads off a scalar network output.
class LinearLoss final : public TerminalLoss {
 public:
  explicit LinearLoss(Vector c) : c_(std::move(c)) {}
  double value(const Matrix& xN) const override;
  Matrix grad(const Matrix& xN) const override;
  Matrix hess_action(const Matrix& xN, const Matrix& dx) const override;
  std::shared_ptr<const TerminalLoss> restrict_rows(int begin, int count) const override;

 private:
  Vector c_;
};

// Softmax probabilities per row, computed stably.
Matrix softmax_rows(const Matrix& logits);

// Reverse accumulation of the full parameter gradient.
Vector gradient(const Network& net, const TerminalLoss& loss, const Trajectory& traj);

}  // namespace llqr
