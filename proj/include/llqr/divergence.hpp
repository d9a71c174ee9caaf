#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "llqr/linearize.hpp"
#include "llqr/network.hpp"

namespace llqr {

enum class DivergenceKind { Euclidean, DampedNewton, GaussNewton, KLNatural, IntermediateLayer };

enum class OutputHead { Softmax, Gaussian };

// Residual map r(x_N) for the Gauss-Newton metric, with exact Jacobian actions.
class ResidualMap {
 public:
  virtual ~ResidualMap() = default;
  virtual int residual_dim() const = 0;
  virtual Matrix eval(const Matrix& xN) const = 0;
  virtual Matrix jvp(const Matrix& xN, const Matrix& dx) const = 0;
  virtual Matrix vjp(const Matrix& xN, const Matrix& w) const = 0;
  virtual std::shared_ptr<const ResidualMap> restrict_rows(int begin, int count) const = 0;
};

using ResidualPtr = std::shared_ptr<const ResidualMap>;

// r(x) = x - t
class LinearResidual final : public ResidualMap {
 public:
  explicit LinearResidual(Matrix targets) : targets_(std::move(targets)) {}
  int residual_dim() const override { return static_cast<int>(targets_.cols()); }
  Matrix eval(const Matrix& xN) const override { return xN - targets_; }
  Matrix jvp(const Matrix&, const Matrix& dx) const override { return dx; }
  Matrix vjp(const Matrix&, const Matrix& w) const override { return w; }
  std::shared_ptr<const ResidualMap> restrict_rows(int begin, int count) const override {
    return std::make_shared<LinearResidual>(targets_.middleRows(begin, count));
  }

 private:
  Matrix targets_;
};

// Which member of the divergence family to induce the quadratic model from.
// Parsed from / emitted to the config strings
//   "euclidean" | "newton:<lambda>" | "gauss-newton" | "kl" | "intermediate:<i,j,...>"
struct DivergenceSpec {
  DivergenceKind kind = DivergenceKind::Euclidean;
  double newton_lambda = 0.0;              // DampedNewton regularizer
  OutputHead head = OutputHead::Softmax;   // KLNatural
  std::vector<int> layers;                 // IntermediateLayer set (1..N)
  double layer_weight = 1.0;               // IntermediateLayer W_i = w*I

  static DivergenceSpec parse(const std::string& s);
  std::string to_string() const;
};

// A divergence D(theta^k, .) bound to a basepoint trajectory. Exposes the
// psi_i / psi_N derivatives needed by the adjoint recursion, the cost blocks,
// and the finite-difference curvature oracle.
class BoundDivergence {
 public:
  virtual ~BoundDivergence() = default;

  virtual DivergenceKind kind() const = 0;
  const Trajectory& base() const { return *base_; }

  // psi_N and its derivatives, as functions of arbitrary terminal activations.
  virtual double terminal_value(const Matrix& xN) const = 0;
  virtual Matrix terminal_grad(const Matrix& xN) const = 0;
  // Hessian action of psi_N at the basepoint.
  virtual Matrix terminal_hess(const Matrix& dxN) const = 0;

  // Per-layer psi_i terms (i in [0, depth)); zero unless overridden.
  virtual double layer_value(int /*i*/, const Matrix& /*xi*/, ConstVecRef /*thi*/) const {
    return 0.0;
  }
  virtual Matrix layer_x_grad(int i, const Matrix& xi) const;
  virtual Vector layer_theta_grad(int i, ConstVecRef thi) const;
  virtual Matrix layer_xx(int i, const Matrix& dxi) const;
  virtual Vector layer_tt(int i, ConstVecRef dthi) const;

 protected:
  BoundDivergence(Network net, TrajectoryPtr base) : net_(std::move(net)), base_(std::move(base)) {}
  Network net_;
  TrajectoryPtr base_;
};

using DivergencePtr = std::shared_ptr<const BoundDivergence>;

// Binds a divergence spec to a basepoint. DampedNewton needs the terminal
// loss; GaussNewton needs the residual map.
DivergencePtr bind_divergence(const DivergenceSpec& spec, const Network& net, TrajectoryPtr base,
                              LossPtr loss = nullptr, ResidualPtr residual = nullptr);

// D(theta^k, theta) evaluated by re-running the forward pass at theta.
double divergence_value(const Network& net, const BoundDivergence& div, ConstVecRef theta,
                        const Matrix& x0);

// Exact gradient of D(theta^k, .) at theta, by reverse accumulation with the
// psi_i cotangents injected at each layer.
Vector divergence_gradient(const Network& net, const BoundDivergence& div, ConstVecRef theta,
                           const Matrix& x0);

// H = d^2/dtheta^2 D(theta^k, theta) at theta^k, materialized by central
// finite differences of divergence_gradient. Independent of the LQR path.
Matrix dense_curvature(const Network& net, const BoundDivergence& div, ConstVecRef theta,
                       const Matrix& x0, bool richardson = false, int cap = kDenseCap);

// Costates p_1..p_N from the backward adjoint recursion.
struct AdjointState {
  std::vector<Matrix> p;  // p[i] valid for i in [1, depth()]; p[0] unused
};

AdjointState adjoint_recursion(const BoundDivergence& div, const Linearization& lin);

// Second-derivative actions of the multiplier-augmented divergence at the
// basepoint: Q_i (state-state), M_i (param-state), R_i (param-param, with
// per-layer damping folded in), terminal Q_N and linear term g_N.
class CostBlocks {
 public:
  CostBlocks(Network net, TrajectoryPtr traj, DivergencePtr div, LossPtr loss,
             std::shared_ptr<const AdjointState> adj, Vector damping);

  int depth() const { return net_.depth(); }
  int batch() const { return traj_->batch; }
  const Network& net() const { return net_; }
  const Vector& damping() const { return damping_; }

  Matrix Q(int i, const Matrix& dx) const;
  Vector M(int i, const Matrix& dx) const;
  Matrix Mt(int i, ConstVecRef dtheta) const;
  Vector R(int i, ConstVecRef dtheta) const;  // includes damping
  Matrix QN(const Matrix& dxN) const;
  const Matrix& gN() const { return gN_; }

  // Stage and terminal pieces of the LQR objective.
  double stage_cost(int i, const Matrix& dx, ConstVecRef dtheta) const;
  double terminal_cost(const Matrix& dxN) const;

  // Dense forms over the flattened batch-state, for verification.
  Matrix dense_Q(int i, int cap = kDenseCap) const;
  Matrix dense_M(int i, int cap = kDenseCap) const;   // p_i x (B*d_i)
  Matrix dense_R(int i, int cap = kDenseCap) const;
  Matrix dense_QN(int cap = kDenseCap) const;

 private:
  Network net_;
  TrajectoryPtr traj_;
  DivergencePtr div_;
  LossPtr loss_;
  std::shared_ptr<const AdjointState> adj_;
  Vector damping_;
  Matrix gN_;
};

using CostBlocksPtr = std::shared_ptr<const CostBlocks>;

CostBlocksPtr cost_blocks(const Network& net, TrajectoryPtr traj, DivergencePtr div, LossPtr loss,
                          std::shared_ptr<const AdjointState> adj, Vector damping);
CostBlocksPtr cost_blocks(const Network& net, TrajectoryPtr traj, DivergencePtr div, LossPtr loss,
                          double damping = 0.0);

// Value of the augmented divergence H(x, theta, p) at arbitrary activations;
// test hook for the stationarity property of the adjoint choice.
double hamiltonian_value(const Network& net, const BoundDivergence& div,
                         const std::vector<Matrix>& x, ConstVecRef theta, const AdjointState& adj);

}  // namespace llqr
