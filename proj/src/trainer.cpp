#include "llqr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <utility>

namespace llqr {

void OuterOptimizer::reset(int dim) {
  velocity_ = Vector::Zero(dim);
  m_ = Vector::Zero(dim);
  v_ = Vector::Zero(dim);
  t_ = 0;
}

void OuterOptimizer::step(Vector& theta, ConstVecRef d) {
  if (velocity_.size() != theta.size()) reset(static_cast<int>(theta.size()));
  ++t_;
  double lr = cfg_.lr;
  if (cfg_.cosine_steps > 0) {
    const double frac = std::min<double>(t_ - 1, cfg_.cosine_steps) / cfg_.cosine_steps;
    lr *= 0.5 * (1.0 + std::cos(M_PI * frac));
  }
  if (cfg_.kind == OuterKind::SGDM) {
    velocity_ = cfg_.momentum * velocity_ + d;
    theta -= lr * velocity_;
  } else {
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * d;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * d.cwiseProduct(d);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    theta -= lr * ((m_ / bc1).array() / ((v_ / bc2).array().sqrt() + cfg_.eps)).matrix();
  }
  if (cfg_.weight_decay != 0.0) {
    theta -= lr * cfg_.weight_decay * theta;
  }
}

std::optional<double> cosine_diagnostic(ConstVecRef u_g, ConstVecRef oracle_step) {
  const double nu = u_g.norm();
  const double no = oracle_step.norm();
  if (nu == 0.0 || no == 0.0) return std::nullopt;
  return (-u_g).dot(oracle_step) / (nu * no);
}

LLQRTrainer::LLQRTrainer(Network net, Vector theta0, OuterConfig outer, LLQRConfig cfg)
    : net_(std::move(net)),
      theta_(std::move(theta0)),
      outer_(outer),
      cfg_(std::move(cfg)),
      u_(Preconditioner::identity(net_, cfg_.structure)) {
  outer_.reset(static_cast<int>(theta_.size()));
}

StepMetrics LLQRTrainer::step(const Matrix& x0, LossPtr loss, ResidualPtr residual) {
  const auto t0 = std::chrono::steady_clock::now();
  StepMetrics met;
  met.step = k_;

  auto traj = std::make_shared<const Trajectory>(forward(net_, theta_, x0));
  met.loss = loss->value(traj->terminal());
  Vector g = gradient(net_, *loss, *traj);
  met.grad_norm = g.norm();

  if (cfg_.enabled && k_ % cfg_.update_period == 0) {
    met.refit = true;
    try {
      RelaxedProblem prob(net_, traj, loss, cfg_.divergence,
                          Vector::Constant(net_.depth(), cfg_.damping), cfg_.chunk_size, residual);
      Preconditioner fresh = Preconditioner::identity(u_.groups(), u_.structure());
      met.j_before = prob.objective(fresh);
      Preconditioner refit = fit_preconditioner(prob, u_, cfg_.inner);
      met.j_after = prob.objective(refit);
      u_ = std::move(refit);
    } catch (const FitDivergence&) {
      // Keep the previous preconditioner and carry on.
      met.refit_aborted = true;
    }
    if (oracle_) {
      Vector ref = oracle_(net_, theta_, x0, loss);
      met.cosine_newton = cosine_diagnostic(-u_.apply(g), ref);
    }
  }

  const Vector d = cfg_.enabled ? u_.apply(g) : Vector(g);
  outer_.step(theta_, d);
  ++k_;

  met.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return met;
}

// ---------------------------------------------------------------------------

struct MetricsWriter::Impl {
  std::ofstream out;
};

MetricsWriter::MetricsWriter(const std::string& path) : impl_(new Impl) {
  impl_->out.open(path, std::ios::out | std::ios::app);
  if (!impl_->out) throw ConfigError("cannot open metrics file: " + path);
  if (impl_->out.tellp() == 0) {
    impl_->out << "step,epoch,loss,grad_norm,refit_flag,J_before,J_after,cosine_newton,wall_ms\n";
  }
}

MetricsWriter::~MetricsWriter() = default;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

void MetricsWriter::write(const StepMetrics& m, long epoch) {
  impl_->out << m.step << ',' << epoch << ',' << fmt(m.loss) << ',' << fmt(m.grad_norm) << ','
             << (m.refit ? 1 : 0) << ',' << fmt(m.j_before) << ',' << fmt(m.j_after) << ','
             << fmt(m.cosine_newton) << ',' << fmt(m.wall_ms) << '\n';
  impl_->out.flush();
}

}  // namespace llqr
