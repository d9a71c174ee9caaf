#pragma once

#include <memory>
#include <vector>

#include "llqr/divergence.hpp"

namespace llqr {

// Factorization of one stage's inner matrix S = R_bar + B^T K B. PSD fast
// path (Cholesky) with a pivoted symmetric-indefinite fallback; a singular S
// raises rather than being silently regularized.
class StageSolve {
 public:
  void compute(const Matrix& s, int layer);
  Vector solve(const Vector& rhs) const;
  bool indefinite() const { return indefinite_; }

 private:
  Eigen::LLT<Matrix> llt_;
  Eigen::LDLT<Matrix> ldlt_;
  bool indefinite_ = false;
};

// Backward gains and affine terms over the flattened per-layer batch-state,
// plus everything the forward rollout reuses.
struct RiccatiState {
  std::vector<Matrix> K;       // K[i], i = 0..N; K[N] = Q_N
  std::vector<Vector> lambda;  // lambda[i], i = 0..N; lambda[N] = flatten(g_N)
  std::vector<StageSolve> solve;  // per stage i = 0..N-1
  std::vector<Matrix> G;          // M_i + B_i^T K_{i+1} A_i   (p_i x B*d_i)
  std::vector<Matrix> Bd;         // dense B_i                  (B*d_{i+1} x p_i)
  bool any_indefinite = false;
  // Largest dense matrix allocated during the recursion, in entries. The
  // recursion only ever forms per-layer-sized matrices, never total-dim^2.
  long max_dense_entries = 0;
};

struct ExactStep {
  Vector dtheta;           // flat parameter update
  std::vector<Matrix> dx;  // rolled state perturbations, dx[0] = 0
  double objective_value = 0.0;
  bool non_descent_possible = false;  // some stage matrix was not PD
};

struct RiccatiOptions {
  int cap = kDenseCap;
  // Fault-injection hook for the verification suite's mutation mode: flips
  // the sign of the mixed M term inside the recursion.
  bool flip_mixed_sign = false;
};

RiccatiState riccati_backward(const CostBlocks& blocks, const Linearization& lin,
                              int cap = kDenseCap);
RiccatiState riccati_backward(const CostBlocks& blocks, const Linearization& lin,
                              const RiccatiOptions& options);

ExactStep forward_rollout(const RiccatiState& state, const CostBlocks& blocks,
                          const Linearization& lin);

// One-call pipeline: forward -> linearize -> adjoint -> blocks -> riccati ->
// rollout. Errors carry the failing stage in their message.
ExactStep exact_step(const Network& net, const DivergenceSpec& spec, ConstVecRef theta,
                     const Matrix& x0, LossPtr loss, double damping = 0.0,
                     ResidualPtr residual = nullptr);

// Eq-form objective evaluated at arbitrary per-layer controls (re-rolls the
// dynamics). Shared by the exact and relaxed paths and by optimality tests.
double lqr_objective(const CostBlocks& blocks, const Linearization& lin, ConstVecRef dtheta);

struct KktResiduals {
  double stationarity_theta = 0.0;  // max over stages of ||R dth + M dx + B^T q||
  double stationarity_x = 0.0;      // max over stages of ||Q dx + M^T dth + A^T q - q||
  double scale = 0.0;               // magnitude reference for relative checks
  double max_relative() const;
};

// Residuals of the stagewise KKT system at a solved step, with multipliers
// reconstructed implicitly as q_i = K_i dx_i + lambda_i.
KktResiduals kkt_residuals(const RiccatiState& state, const CostBlocks& blocks,
                           const Linearization& lin, const ExactStep& step);

}  // namespace llqr
