#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "llqr/relaxed.hpp"

namespace llqr {

enum class OuterKind { SGDM, AdamW };

struct OuterConfig {
  OuterKind kind = OuterKind::SGDM;
  double lr = 0.05;
  double momentum = 0.9;   // SGDM
  double beta1 = 0.9;      // AdamW
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, applied to theta directly
  long cosine_steps = 0;      // 0 keeps lr constant; otherwise cosine decay over this horizon
};

// SGDM / AdamW with the step direction d substituted wherever the raw
// gradient would appear; moments act on d.
class OuterOptimizer {
 public:
  explicit OuterOptimizer(OuterConfig cfg) : cfg_(cfg) {}

  const OuterConfig& config() const { return cfg_; }
  void reset(int dim);
  void step(Vector& theta, ConstVecRef d);

 private:
  OuterConfig cfg_;
  Vector velocity_;
  Vector m_;
  Vector v_;
  long t_ = 0;
};

struct LLQRConfig {
  int update_period = 500;   // refit when k mod n == 0
  PrecondStructure structure = PrecondStructure::EKFac;
  DivergenceSpec divergence = DivergenceSpec{.kind = DivergenceKind::KLNatural};
  InnerFitConfig inner;
  double damping = 0.0;
  int chunk_size = 0;  // 0 = full batch
  bool enabled = true; // false runs the bare outer optimizer
};

struct StepMetrics {
  long step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  bool refit = false;
  bool refit_aborted = false;
  std::optional<double> j_before;
  std::optional<double> j_after;
  std::optional<double> cosine_newton;
  double wall_ms = 0.0;
};

// cos(-u_g, oracle_step) where oracle_step is already a descent step such as
// -H^{-1} g; reports nothing on a zero vector.
std::optional<double> cosine_diagnostic(ConstVecRef u_g, ConstVecRef oracle_step);

// Algorithm-style training loop: periodic preconditioner refits, structured
// preconditioned steps in between, metric emission per step.
class LLQRTrainer {
 public:
  LLQRTrainer(Network net, Vector theta0, OuterConfig outer, LLQRConfig cfg);

  const Vector& theta() const { return theta_; }
  const Preconditioner& preconditioner() const { return u_; }
  long step_count() const { return k_; }

  // Optional hook computing a reference step (e.g. dense Newton) for the
  // per-refit alignment metric; called only when set and a refit happens.
  using OracleFn = std::function<Vector(const Network&, const Vector& theta, const Matrix& x0,
                                        LossPtr loss)>;
  void set_oracle(OracleFn fn) { oracle_ = std::move(fn); }

  StepMetrics step(const Matrix& x0, LossPtr loss, ResidualPtr residual = nullptr);

 private:
  Network net_;
  Vector theta_;
  OuterOptimizer outer_;
  LLQRConfig cfg_;
  Preconditioner u_;
  long k_ = 0;
  OracleFn oracle_;
};

// Append-only CSV with the fixed schema
//   step,epoch,loss,grad_norm,refit_flag,J_before,J_after,cosine_newton,wall_ms
// Values print with max round-trip precision so identical runs produce
// identical bytes (wall_ms is the only nondeterministic column, kept last).
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  ~MetricsWriter();
  void write(const StepMetrics& m, long epoch);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace llqr
