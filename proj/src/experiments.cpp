#include "llqr/experiments.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "llqr/datasets.hpp"
#include "llqr/netfile.hpp"
#include "llqr/oracle.hpp"
#include "llqr/rosenbrock.hpp"

namespace llqr {

namespace {

std::optional<double> step_cosine(const Vector& direction, const Vector& newton) {
  if (!direction.allFinite() || !newton.allFinite()) return std::nullopt;
  const double nd = direction.norm();
  const double nn = newton.norm();
  if (nd == 0.0 || nn == 0.0) return std::nullopt;
  return direction.dot(newton) / (nd * nn);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_trace_csv(const std::string& dir, const MethodTrace& t) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  std::ofstream out(dir + "/" + t.name + ".csv");
  out << "iter,x,y,R,grad_norm,cosine_newton,diag_cosine_newton\n";
  for (size_t k = 0; k < t.r.size(); ++k) {
    out << k << ',' << fmt(t.x[k]) << ',' << fmt(t.y[k]) << ',' << fmt(t.r[k]) << ','
        << fmt(t.grad_norm[k]) << ',' << (t.cosine_newton[k] ? fmt(*t.cosine_newton[k]) : "")
        << ',' << (t.diag_cosine_newton[k] ? fmt(*t.diag_cosine_newton[k]) : "") << '\n';
  }
}

}  // namespace

double MethodTrace::mean_cosine() const {
  double acc = 0;
  int n = 0;
  for (const auto& c : cosine_newton) {
    if (c) {
      acc += *c;
      ++n;
    }
  }
  return n ? acc / n : 0.0;
}

double MethodTrace::mean_diag_cosine() const {
  double acc = 0;
  int n = 0;
  for (const auto& c : diag_cosine_newton) {
    if (c) {
      acc += *c;
      ++n;
    }
  }
  return n ? acc / n : 0.0;
}

const MethodTrace& RosenbrockReport::method(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.name == name) return m;
  }
  throw ConfigError("no such method trace: " + name);
}

nlohmann::json RosenbrockReport::summary() const {
  nlohmann::json j;
  j["a"] = config.a;
  j["b"] = config.b;
  j["start"] = {config.start_x, config.start_y};
  j["tol"] = config.tol;
  for (const auto& m : methods) {
    nlohmann::json mj;
    mj["iterations_to_tol"] = m.iterations_to_tol;
    mj["final_R"] = m.final_r;
    mj["failed"] = m.failed;
    if (!m.failure.empty()) mj["failure"] = m.failure;
    mj["mean_cosine_newton"] = m.mean_cosine();
    if (m.name == "llqr_two_layer") mj["mean_diag_cosine_newton"] = m.mean_diag_cosine();
    j["methods"][m.name] = mj;
  }
  return j;
}

namespace {

// One comparator loop. `propose` returns the next iterate, or nullopt to stop
// the method (failure is recorded inside the callback).
template <typename Propose>
MethodTrace run_method(const std::string& name, const RosenbrockConfig& cfg, int iterations,
                       Propose&& propose) {
  MethodTrace t;
  t.name = name;
  Vector theta(2);
  theta << cfg.start_x, cfg.start_y;

  for (int k = 0; k < iterations; ++k) {
    const double r = rosenbrock(cfg.a, cfg.b, theta(0), theta(1));
    const Vector g = rosenbrock_grad(cfg.a, cfg.b, theta(0), theta(1));
    const Matrix h = rosenbrock_hess(cfg.a, cfg.b, theta(0), theta(1));

    t.x.push_back(theta(0));
    t.y.push_back(theta(1));
    t.r.push_back(r);
    t.grad_norm.push_back(g.norm());
    if (t.iterations_to_tol < 0 && r < cfg.tol) t.iterations_to_tol = k;

    // Reference direction for the alignment diagnostics.
    std::optional<Vector> newton;
    if (std::abs(h.determinant()) > 1e-300) {
      newton = Vector(-h.fullPivLu().solve(g));
    }
    std::optional<Vector> next;
    if (!t.failed) {
      next = propose(theta, g, h, t);
    }
    if (next && newton) {
      t.cosine_newton.push_back(step_cosine(Vector(*next - theta), *newton));
    } else {
      t.cosine_newton.push_back(std::nullopt);
    }
    if (newton && h(0, 0) > 0.0 && h(1, 1) > 0.0) {
      Vector diag_step = (-g.array() / (h.diagonal().array())).matrix();
      t.diag_cosine_newton.push_back(step_cosine(diag_step, *newton));
    } else {
      t.diag_cosine_newton.push_back(std::nullopt);
    }

    if (!next) break;
    if (!next->allFinite()) {
      t.failed = true;
      t.failure = "step not finite at iteration " + std::to_string(k);
      break;
    }
    theta = *next;
    if (!std::isfinite(rosenbrock(cfg.a, cfg.b, theta(0), theta(1)))) {
      t.failed = true;
      t.failure = "objective overflowed at iteration " + std::to_string(k + 1);
      break;
    }
  }
  t.final_r = rosenbrock(cfg.a, cfg.b, theta(0), theta(1));
  write_trace_csv(cfg.out_dir, t);
  return t;
}

// Relaxed run on one of the two network forms, driven by the training loop.
MethodTrace run_relaxed(const std::string& name, const RosenbrockConfig& cfg, bool two_layer) {
  Network net = two_layer ? rosenbrock_two_layer_net(cfg.a, cfg.b)
                          : rosenbrock_single_layer_net(cfg.a, cfg.b);
  LLQRConfig lcfg;
  lcfg.update_period = cfg.update_period;
  lcfg.structure = two_layer ? PrecondStructure::Diagonal : PrecondStructure::Dense;
  lcfg.divergence = DivergenceSpec{.kind = DivergenceKind::DampedNewton};
  lcfg.inner.steps = cfg.inner_steps;
  lcfg.inner.lr = cfg.inner_lr;
  lcfg.inner.momentum = cfg.inner_momentum;
  lcfg.inner.ema = two_layer ? cfg.two_layer_ema : cfg.dense_ema;
  lcfg.damping = cfg.damping;

  Vector theta0(2);
  theta0 << cfg.start_x, cfg.start_y;
  OuterConfig outer{OuterKind::SGDM, two_layer ? cfg.two_layer_outer_lr : cfg.dense_outer_lr,
                    two_layer ? cfg.two_layer_outer_momentum : cfg.dense_outer_momentum};
  LLQRTrainer trainer(net, theta0, outer, lcfg);
  LossPtr loss = rosenbrock_loss();
  const Matrix x0 = rosenbrock_input();

  const int iterations =
      (!two_layer && cfg.dense_iterations > 0) ? cfg.dense_iterations : cfg.iterations;
  return run_method(name, cfg, iterations,
                    [&](const Vector&, const Vector&, const Matrix&, MethodTrace&)
                        -> std::optional<Vector> {
                      trainer.step(x0, loss);
                      return trainer.theta();
                    });
}

}  // namespace

RosenbrockReport run_rosenbrock(const RosenbrockConfig& cfg) {
  RosenbrockReport report;
  report.config = cfg;

  // Dense curvature steps from the analytic 2x2 Hessian.
  report.methods.push_back(run_method(
      "newton", cfg, cfg.iterations,
      [&](const Vector& theta, const Vector& g, const Matrix& h, MethodTrace& t)
          -> std::optional<Vector> {
        Eigen::FullPivLU<Matrix> lu(h);
        if (!lu.isInvertible()) {
          t.failed = true;
          t.failure = "singular curvature";
          return std::nullopt;
        }
        return Vector(theta - lu.solve(g));
      }));

  // Exact LQR on the two-layer form.
  {
    Network net = rosenbrock_two_layer_net(cfg.a, cfg.b);
    LossPtr loss = rosenbrock_loss();
    report.methods.push_back(run_method(
        "lqr_exact", cfg, cfg.iterations,
        [&](const Vector& theta, const Vector&, const Matrix&, MethodTrace& t)
            -> std::optional<Vector> {
          try {
            ExactStep step = exact_step(net, DivergenceSpec{.kind = DivergenceKind::DampedNewton},
                                        theta, rosenbrock_input(), loss, cfg.damping);
            return Vector(theta + step.dtheta);
          } catch (const SolverError& e) {
            t.failed = true;
            t.failure = e.what();
            return std::nullopt;
          }
        }));
  }

  report.methods.push_back(run_relaxed("llqr_two_layer", cfg, true));
  report.methods.push_back(run_relaxed("llqr_dense_single", cfg, false));

  // Diagonal-curvature baseline.
  report.methods.push_back(run_method(
      "diag_hessian", cfg, cfg.iterations,
      [&](const Vector& theta, const Vector& g, const Matrix& h, MethodTrace& t)
          -> std::optional<Vector> {
        if (h(0, 0) <= 0.0 || h(1, 1) <= 0.0) {
          t.failed = true;
          t.failure = "nonpositive diagonal curvature";
          return std::nullopt;
        }
        return Vector(theta - (g.array() / h.diagonal().array()).matrix());
      }));

  // Plain SGDM.
  {
    Vector velocity = Vector::Zero(2);
    report.methods.push_back(run_method(
        "sgdm", cfg, cfg.iterations,
        [&](const Vector& theta, const Vector& g, const Matrix&, MethodTrace&)
            -> std::optional<Vector> {
          velocity = cfg.sgdm_momentum * velocity + g;
          return Vector(theta - cfg.sgdm_lr * velocity);
        }));
  }

  if (!cfg.out_dir.empty()) {
    std::ofstream out(cfg.out_dir + "/summary.json");
    out << report.summary().dump(2) << '\n';
  }
  return report;
}

// ---------------------------------------------------------------------------

MlpReport run_mlp(const MlpConfig& cfg) {
  Dataset data;
  if (cfg.dataset == "blobs") {
    data = make_blobs(cfg.seed, cfg.samples);
  } else if (cfg.dataset == "two-moons") {
    data = make_two_moons(cfg.seed, cfg.samples);
  } else {
    throw ConfigError("unknown dataset: " + cfg.dataset);
  }

  Network net = cfg.net_file.empty()
                    ? make_mlp(static_cast<int>(data.x.cols()), cfg.hidden, data.num_classes)
                    : load_network_file(cfg.net_file).net;
  if (net.in_dim() != data.x.cols() || net.out_dim() != data.num_classes) {
    throw ConfigError("network dims do not match the dataset (" +
                      std::to_string(data.x.cols()) + " features, " +
                      std::to_string(data.num_classes) + " classes)");
  }
  Vector theta0 = init_theta(net, cfg.seed + 1);

  LLQRTrainer trainer(net, theta0, cfg.outer, cfg.llqr);
  if (cfg.oracle_cosine && net.param_dim() <= kDenseCap) {
    DivergenceSpec spec = cfg.llqr.divergence;
    trainer.set_oracle([spec](const Network& n, const Vector& th, const Matrix& x0, LossPtr loss) {
      auto traj = std::make_shared<const Trajectory>(forward(n, th, x0));
      auto div = bind_divergence(spec, n, traj, loss);
      DenseCurvature c{dense_curvature(n, *div, th, x0), gradient(n, *loss, *traj)};
      return newton_step_dense(c, 1e-8);
    });
  }

  std::unique_ptr<MetricsWriter> writer;
  if (!cfg.out_csv.empty()) {
    std::remove(cfg.out_csv.c_str());
    writer = std::make_unique<MetricsWriter>(cfg.out_csv);
  }

  BatchSampler sampler(data, cfg.batch, cfg.seed + 2);
  MlpReport report;
  report.metrics.reserve(cfg.steps);
  for (int k = 0; k < cfg.steps; ++k) {
    auto b = sampler.next();
    auto loss = std::make_shared<SoftmaxCrossEntropyLoss>(b.labels);
    StepMetrics m = trainer.step(b.x, loss);
    if (writer) writer->write(m, sampler.epoch());
    report.metrics.push_back(m);
  }
  report.final_loss = report.metrics.empty() ? 0.0 : report.metrics.back().loss;
  report.final_theta = trainer.theta();
  return report;
}

// ---------------------------------------------------------------------------

nlohmann::json ExperimentConfig::to_json() const {
  return nlohmann::json{{"experiment", experiment},
                        {"seed", seed},
                        {"out", out},
                        {"divergence", divergence},
                        {"structure", structure},
                        {"optimizer", optimizer},
                        {"lr", lr},
                        {"momentum", momentum},
                        {"weight_decay", weight_decay},
                        {"cosine_steps", cosine_steps},
                        {"update_period", update_period},
                        {"inner_steps", inner_steps},
                        {"inner_lr", inner_lr},
                        {"inner_momentum", inner_momentum},
                        {"ema", ema},
                        {"damping", damping},
                        {"chunk_size", chunk_size},
                        {"steps", steps},
                        {"batch", batch},
                        {"filter", filter}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.experiment = j.value("experiment", c.experiment);
  c.seed = j.value("seed", c.seed);
  c.out = j.value("out", c.out);
  c.divergence = j.value("divergence", c.divergence);
  c.structure = j.value("structure", c.structure);
  c.optimizer = j.value("optimizer", c.optimizer);
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.cosine_steps = j.value("cosine_steps", c.cosine_steps);
  c.update_period = j.value("update_period", c.update_period);
  c.inner_steps = j.value("inner_steps", c.inner_steps);
  c.inner_lr = j.value("inner_lr", c.inner_lr);
  c.inner_momentum = j.value("inner_momentum", c.inner_momentum);
  c.ema = j.value("ema", c.ema);
  c.damping = j.value("damping", c.damping);
  c.chunk_size = j.value("chunk_size", c.chunk_size);
  c.steps = j.value("steps", c.steps);
  c.batch = j.value("batch", c.batch);
  c.filter = j.value("filter", c.filter);
  return c;
}

}  // namespace llqr
