#pragma once

#include <memory>
#include <vector>

#include "llqr/lqr.hpp"
#include "llqr/precond.hpp"

namespace llqr {

enum class InnerOpt { SGDM, Adam };

InnerOpt inner_opt_from_string(const std::string& s);
std::string to_string(InnerOpt o);

// Inner-loop settings for fitting U on the relaxed objective.
struct InnerFitConfig {
  int steps = 25;
  InnerOpt optimizer = InnerOpt::SGDM;
  double lr = 0.005;
  double momentum = 0.9;
  double ema = 0.9;

  void validate() const {
    if (steps < 1) throw ConfigError("inner steps must be >= 1");
    if (ema < 0.0 || ema > 1.0) throw ConfigError("ema must be in [0, 1]");
  }
};

// The relaxed problem at a fixed basepoint: substitute dtheta_i = -U_i g_i
// into the LQR objective and roll the linearized dynamics. The batch may be
// partitioned into chunks whose weighted contributions reproduce the
// full-batch objective while peak rollout state tracks the chunk size.
class RelaxedProblem {
 public:
  // chunk_size = 0 means full batch.
  RelaxedProblem(const Network& net, TrajectoryPtr traj, LossPtr loss, const DivergenceSpec& spec,
                 Vector damping, int chunk_size = 0, ResidualPtr residual = nullptr);

  const Network& net() const { return net_; }
  const Vector& gradient() const { return g_; }
  int batch() const { return batch_; }
  int num_chunks() const { return static_cast<int>(chunks_.size()); }
  const std::vector<double>& chunk_weights() const { return weights_; }

  double objective(const Preconditioner& u) const;
  // Exact gradient of the objective with respect to every factor entry of U,
  // from one backward sweep over the linear rollout per chunk.
  std::pair<double, Vector> objective_and_gradient(const Preconditioner& u) const;

 private:
  struct Chunk {
    double weight;
    LinearizationPtr lin;
    CostBlocksPtr blocks;
  };

  // dJ/d(dtheta) for one chunk at controls dtheta, accumulated into dj.
  double chunk_value(const Chunk& c, ConstVecRef dtheta, Vector* dj_dtheta) const;

  Network net_;
  Vector g_;
  int batch_ = 0;
  std::vector<Chunk> chunks_;
  std::vector<double> weights_;
};

// T inner steps on a fresh identity-initialized copy, then the EMA combine
// with u_prev. Raises FitDivergence if the objective blows up mid-fit.
Preconditioner fit_preconditioner(const RelaxedProblem& prob, const Preconditioner& u_prev,
                                  const InnerFitConfig& cfg);

// Gradient of U's parameters lifted from dJ/d(dtheta); exposed for tests.
Vector precond_param_gradient(const Preconditioner& u, ConstVecRef g, ConstVecRef dj_dtheta);

}  // namespace llqr
