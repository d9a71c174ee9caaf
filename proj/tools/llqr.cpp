#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

#include "llqr/experiments.hpp"
#include "llqr/verify.hpp"

namespace {

llqr::ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw llqr::ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  return llqr::ExperimentConfig::from_json(j);
}

void add_common_flags(CLI::App* cmd, llqr::ExperimentConfig& cfg, std::string& config_sink) {
  cmd->add_option("--seed", cfg.seed, "random seed");
  cmd->add_option("--out", cfg.out, "output path (directory or file)");
  cmd->add_option("--divergence", cfg.divergence,
                  "euclidean | newton:<lambda> | gauss-newton | kl | intermediate:<layers>");
  cmd->add_option("--structure", cfg.structure, "diag | kfac | ekfac | dense");
  cmd->add_option("--optimizer", cfg.optimizer, "sgdm | adamw");
  cmd->add_option("--lr", cfg.lr, "outer learning rate");
  cmd->add_option("--momentum", cfg.momentum, "outer momentum / beta1");
  cmd->add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay");
  cmd->add_option("--cosine-steps", cfg.cosine_steps,
                  "cosine-decay horizon for the outer lr (0 = constant)");
  cmd->add_option("--update-period", cfg.update_period, "refit period n");
  cmd->add_option("--inner-steps", cfg.inner_steps, "inner iterations T");
  cmd->add_option("--inner-lr", cfg.inner_lr, "inner step size");
  cmd->add_option("--inner-momentum", cfg.inner_momentum, "inner SGDM momentum");
  cmd->add_option("--ema", cfg.ema, "EMA decay for the preconditioner");
  cmd->add_option("--damping", cfg.damping, "per-layer damping added to the R blocks");
  cmd->add_option("--chunk-size", cfg.chunk_size, "refit chunk size (0 = full batch)");
  cmd->add_option("--steps", cfg.steps, "training steps / iterations");
  cmd->add_option("--batch", cfg.batch, "minibatch size");
  cmd->add_option("--config", config_sink, "JSON config file (loaded before flag parsing)");
}

int cmd_rosenbrock(const llqr::ExperimentConfig& cfg, bool steps_given, double start_x,
                   double start_y) {
  llqr::RosenbrockConfig rc;
  rc.start_x = start_x;
  rc.start_y = start_y;
  if (steps_given) rc.iterations = cfg.steps;
  rc.inner_steps = cfg.inner_steps;
  rc.inner_lr = cfg.inner_lr;
  rc.inner_momentum = cfg.inner_momentum;
  rc.update_period = cfg.update_period;
  rc.damping = cfg.damping;
  rc.out_dir = cfg.out;
  llqr::RosenbrockReport report = llqr::run_rosenbrock(rc);
  std::cout << report.summary().dump(2) << std::endl;
  return 0;
}

int cmd_mlp(const llqr::ExperimentConfig& cfg, bool baseline, bool oracle,
            const std::string& net_file) {
  llqr::MlpConfig mc;
  mc.net_file = net_file;
  mc.seed = cfg.seed;
  mc.steps = cfg.steps;
  mc.batch = cfg.batch;
  mc.out_csv = cfg.out;
  mc.oracle_cosine = oracle;
  mc.outer.kind = cfg.optimizer == "adamw" ? llqr::OuterKind::AdamW : llqr::OuterKind::SGDM;
  mc.outer.lr = cfg.lr;
  mc.outer.momentum = cfg.momentum;
  mc.outer.beta1 = cfg.momentum;
  mc.outer.weight_decay = cfg.weight_decay;
  mc.outer.cosine_steps = cfg.cosine_steps;
  mc.llqr.enabled = !baseline;
  mc.llqr.update_period = cfg.update_period;
  mc.llqr.structure = llqr::structure_from_string(cfg.structure);
  mc.llqr.divergence = llqr::DivergenceSpec::parse(cfg.divergence);
  mc.llqr.inner.steps = cfg.inner_steps;
  mc.llqr.inner.lr = cfg.inner_lr;
  mc.llqr.inner.momentum = cfg.inner_momentum;
  mc.llqr.inner.ema = cfg.ema;
  mc.llqr.damping = cfg.damping;
  mc.llqr.chunk_size = cfg.chunk_size;

  llqr::MlpReport report = llqr::run_mlp(mc);
  std::cout << "final_loss " << report.final_loss << " after " << report.metrics.size()
            << " steps" << std::endl;
  return 0;
}

int cmd_verify(const llqr::ExperimentConfig& cfg, bool mutate) {
  llqr::VerifyReport report = llqr::run_verify(
      cfg.filter, mutate ? llqr::Mutation::FlipRiccatiMixedSign : llqr::Mutation::None, true);
  if (!cfg.out.empty()) {
    std::ofstream out(cfg.out);
    out << report.to_json().dump(2) << '\n';
  }
  if (report.results.empty()) {
    std::cerr << "no criteria matched filter '" << cfg.filter << "'; available:" << std::endl;
    for (const std::string& name : llqr::verify_criteria()) {
      std::cerr << "  " << name << std::endl;
    }
    return 2;
  }
  return report.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layerwise LQR optimization toolkit"};
  app.require_subcommand(1);

  llqr::ExperimentConfig cfg;
  std::string config_sink;
  bool baseline = false;
  bool oracle = false;
  bool mutate = false;

  // A config file, when present, provides the base values; explicit flags
  // override it. Scan for it before wiring flag defaults.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      try {
        cfg = load_config_file(argv[i + 1]);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
      }
    }
  }

  double start_x = -1.0;
  double start_y = 1.0;
  CLI::App* rosen = app.add_subcommand("rosenbrock", "benchmark comparator suite");
  add_common_flags(rosen, cfg, config_sink);
  rosen->add_option("--start-x", start_x, "starting x");
  rosen->add_option("--start-y", start_y, "starting y");

  CLI::App* mlp = app.add_subcommand("mlp", "train a small MLP on a synthetic dataset");
  add_common_flags(mlp, cfg, config_sink);
  mlp->add_flag("--baseline", baseline, "run the bare optimizer without the wrapper");
  mlp->add_flag("--oracle-cosine", oracle, "log alignment against the dense reference step");
  std::string net_file;
  mlp->add_option("--net", net_file, "network description file (JSON)");

  CLI::App* verify = app.add_subcommand("verify", "run the acceptance criteria");
  verify->add_option("--filter", cfg.filter, "run only criteria whose name contains this");
  verify->add_option("--out", cfg.out, "write a JSON report here");
  verify->add_flag("--mutate-riccati-m-sign", mutate,
                   "inject a sign fault into the recursion (the suite must then fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (rosen->parsed()) {
      return cmd_rosenbrock(cfg, rosen->count("--steps") > 0, start_x, start_y);
    }
    if (mlp->parsed()) return cmd_mlp(cfg, baseline, oracle, net_file);
    if (verify->parsed()) return cmd_verify(cfg, mutate);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 2;
}
