#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "llqr/trainer.hpp"

namespace llqr {

// Comparator suite on R_{a,b}: dense-curvature steps, the exact LQR solve on
// the two-layer form, relaxed learned preconditioners on both forms, the
// diagonal-curvature step baseline, and SGDM.
struct RosenbrockConfig {
  double a = 1.0;
  double b = 100.0;
  double start_x = -1.0;
  double start_y = 1.0;
  int iterations = 2000;
  double tol = 1e-6;

  // Relaxed-run inner loop (toy defaults: 500 steps at 1e-4).
  int inner_steps = 500;
  double inner_lr = 1e-4;
  double inner_momentum = 0.9;
  int update_period = 1;
  double damping = 0.0;

  // Outer handling of the relaxed runs. The inner loop above is fixed by the
  // experiment; these keep the outer iteration inside its stable region.
  double two_layer_outer_lr = 1e-3;
  double two_layer_outer_momentum = 0.9;
  double two_layer_ema = 0.95;
  double dense_outer_lr = 1e-3;
  double dense_outer_momentum = 0.9;
  double dense_ema = 0.95;
  int dense_iterations = 0;  // 0: use `iterations`

  double sgdm_lr = 1e-3;
  double sgdm_momentum = 0.9;

  std::string out_dir;  // empty: no files written
};

struct MethodTrace {
  std::string name;
  // Per iterate, sampled before stepping.
  std::vector<double> x, y, r, grad_norm;
  std::vector<std::optional<double>> cosine_newton;
  std::vector<std::optional<double>> diag_cosine_newton;  // along the same iterates
  int iterations_to_tol = -1;
  double final_r = 0.0;
  bool failed = false;
  std::string failure;

  double mean_cosine() const;
  double mean_diag_cosine() const;
};

struct RosenbrockReport {
  RosenbrockConfig config;
  std::vector<MethodTrace> methods;
  const MethodTrace& method(const std::string& name) const;
  nlohmann::json summary() const;
};

RosenbrockReport run_rosenbrock(const RosenbrockConfig& cfg);

// Small-MLP training on a synthetic dataset, baseline versus the wrapped
// optimizer, with per-step CSV emission.
struct MlpConfig {
  std::string dataset = "blobs";  // "blobs" | "two-moons"
  int samples = 256;
  int batch = 32;
  std::vector<int> hidden = {8};
  std::string net_file;  // optional network description file; overrides `hidden`
  int steps = 300;
  unsigned seed = 1;

  OuterConfig outer;
  LLQRConfig llqr;
  bool oracle_cosine = false;  // dense reference alignment per refit (small nets)

  std::string out_csv;  // empty: no file written
};

struct MlpReport {
  std::vector<StepMetrics> metrics;
  double final_loss = 0.0;
  Vector final_theta;
};

MlpReport run_mlp(const MlpConfig& cfg);

// Flat experiment configuration used by the command line; round-trips
// through JSON losslessly.
struct ExperimentConfig {
  std::string experiment = "verify";  // rosenbrock | mlp | verify
  unsigned seed = 1;
  std::string out;
  std::string divergence = "kl";
  std::string structure = "ekfac";
  std::string optimizer = "sgdm";
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  long cosine_steps = 0;
  int update_period = 500;
  int inner_steps = 25;
  double inner_lr = 0.005;
  double inner_momentum = 0.9;
  double ema = 0.9;
  double damping = 0.0;
  int chunk_size = 0;
  int steps = 300;
  int batch = 32;
  std::string filter;  // verify criterion filter

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  bool operator==(const ExperimentConfig&) const = default;
};

}  // namespace llqr
