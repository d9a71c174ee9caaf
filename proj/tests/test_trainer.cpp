#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "llqr/datasets.hpp"
#include "llqr/netfile.hpp"
#include "llqr/trainer.hpp"
#include "test_support.hpp"

using namespace llqr;
using llqr::testing::Rng;

TEST_CASE("sgdm: momentum 0 is vanilla gradient descent") {
  OuterOptimizer opt({OuterKind::SGDM, 0.1, 0.0});
  Vector theta = Vector::Ones(3);
  Vector d = Vector::Constant(3, 2.0);
  opt.step(theta, d);
  CHECK((theta - Vector::Constant(3, 0.8)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("sgdm: the second step with constant direction scales by 1 + momentum") {
  OuterOptimizer opt({OuterKind::SGDM, 0.1, 0.9});
  Vector theta = Vector::Zero(2);
  Vector d = Vector::Ones(2);
  opt.step(theta, d);
  const double first = -theta(0);
  opt.step(theta, d);
  const double second = -theta(0) - first;
  CHECK(first == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(second == doctest::Approx(0.1 * 1.9).epsilon(1e-15));
}

TEST_CASE("adamw: constant direction drives the update magnitude to lr") {
  OuterConfig cfg;
  cfg.kind = OuterKind::AdamW;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.0;
  OuterOptimizer opt(cfg);
  Vector theta = Vector::Zero(1);
  Vector d = Vector::Constant(1, 3.0);
  double prev = 0.0;
  double delta = 0.0;
  for (int t = 0; t < 500; ++t) {
    prev = theta(0);
    opt.step(theta, d);
    delta = prev - theta(0);
  }
  CHECK(delta == doctest::Approx(cfg.lr).epsilon(1e-6));
}

TEST_CASE("adamw: decoupled weight decay shrinks theta directly") {
  OuterConfig cfg;
  cfg.kind = OuterKind::AdamW;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  OuterOptimizer opt(cfg);
  Vector theta = Vector::Constant(1, 2.0);
  opt.step(theta, Vector::Zero(1));
  CHECK(theta(0) == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)).epsilon(1e-12));
}

TEST_CASE("cosine schedule decays the step size to zero over the horizon") {
  OuterConfig cfg;
  cfg.kind = OuterKind::SGDM;
  cfg.lr = 1.0;
  cfg.momentum = 0.0;
  cfg.cosine_steps = 4;
  OuterOptimizer opt(cfg);
  Vector theta = Vector::Zero(1);
  Vector d = Vector::Ones(1);
  std::vector<double> deltas;
  for (int t = 0; t < 5; ++t) {
    const double before = theta(0);
    opt.step(theta, d);
    deltas.push_back(before - theta(0));
  }
  CHECK(deltas[0] == doctest::Approx(1.0));
  CHECK(deltas[4] == doctest::Approx(0.0).epsilon(1e-15));
  for (size_t t = 1; t < deltas.size(); ++t) CHECK(deltas[t] < deltas[t - 1]);
}

TEST_CASE("cosine diagnostic: signs and missing values") {
  Vector step(2);
  step << 1.0, 0.0;
  CHECK(*cosine_diagnostic(-step, step) == doctest::Approx(1.0));
  CHECK(*cosine_diagnostic(step, step) == doctest::Approx(-1.0));
  CHECK(!cosine_diagnostic(Vector::Zero(2), step).has_value());
}

namespace {

struct RunResult {
  std::vector<Vector> thetas;
  int refits = 0;
};

RunResult run_llqr(bool enabled, int steps, const LLQRConfig& cfg_in, unsigned seed) {
  Dataset data = make_blobs(seed, 64, 3, 2);
  Network net = make_mlp(2, {5}, 3);
  Vector theta0 = init_theta(net, seed + 1);

  LLQRConfig cfg = cfg_in;
  cfg.enabled = enabled;
  OuterConfig outer{OuterKind::SGDM, 0.05, 0.9};
  LLQRTrainer trainer(net, theta0, outer, cfg);

  BatchSampler sampler(data, 16, seed + 2);
  RunResult out;
  for (int k = 0; k < steps; ++k) {
    auto b = sampler.next();
    auto loss = std::make_shared<SoftmaxCrossEntropyLoss>(b.labels);
    StepMetrics m = trainer.step(b.x, loss);
    out.refits += m.refit ? 1 : 0;
    out.thetas.push_back(trainer.theta());
  }
  return out;
}

}  // namespace

TEST_CASE("wrapper neutrality: frozen identity U reproduces plain SGDM bitwise") {
  LLQRConfig cfg;
  cfg.update_period = 5;
  cfg.structure = PrecondStructure::Diagonal;
  cfg.divergence = DivergenceSpec{.kind = DivergenceKind::KLNatural};
  cfg.inner.steps = 1;
  cfg.inner.lr = 0.0;  // frozen
  cfg.inner.ema = 1.0;
  RunResult wrapped = run_llqr(true, 40, cfg, 99);
  RunResult plain = run_llqr(false, 40, cfg, 99);
  for (int k = 0; k < 40; ++k) {
    CHECK(std::memcmp(wrapped.thetas[k].data(), plain.thetas[k].data(),
                      sizeof(double) * wrapped.thetas[k].size()) == 0);
  }
}

TEST_CASE("refit cadence: refits happen exactly at k mod n == 0") {
  LLQRConfig cfg;
  cfg.update_period = 7;
  cfg.structure = PrecondStructure::Diagonal;
  cfg.divergence = DivergenceSpec{.kind = DivergenceKind::KLNatural};
  cfg.inner.steps = 2;
  cfg.inner.lr = 1e-3;
  RunResult run = run_llqr(true, 40, cfg, 7);
  CHECK(run.refits == (40 + 6) / 7);
}

TEST_CASE("convex quadratic: preconditioned loss is monotone under a safe step size") {
  // One affine layer, squared-error loss: L is a PSD quadratic in theta.
  Rng rng(503);
  Network net({std::make_shared<AffineLayer>(2, 2)});
  Vector theta = rng.vector(net.param_dim());
  Matrix x0 = rng.matrix(8, 2);
  Matrix targets = rng.matrix(8, 2);
  auto loss = std::make_shared<SquaredErrorLoss>(targets);

  LLQRConfig cfg;
  cfg.update_period = 10;
  cfg.structure = PrecondStructure::KFac;
  cfg.divergence = DivergenceSpec{.kind = DivergenceKind::DampedNewton, .newton_lambda = 0.1};
  cfg.inner.steps = 10;
  cfg.inner.lr = 1e-2;
  OuterConfig outer{OuterKind::SGDM, 0.05, 0.0};
  LLQRTrainer trainer(net, theta, outer, cfg);

  double prev = 1e300;
  for (int k = 0; k < 100; ++k) {
    StepMetrics m = trainer.step(x0, loss);
    CHECK(m.loss <= prev + 1e-12);
    prev = m.loss;
  }
}

TEST_CASE("metrics csv: deterministic apart from the trailing wall_ms column") {
  auto strip_wall = [](const std::string& path) {
    std::ifstream in(path);
    std::string line, acc;
    while (std::getline(in, line)) {
      acc += line.substr(0, line.rfind(','));
      acc += '\n';
    }
    return acc;
  };

  for (int run = 0; run < 2; ++run) {
    std::string path = "/tmp/llqr_metrics_" + std::to_string(run) + ".csv";
    std::remove(path.c_str());
    MetricsWriter writer(path);
    LLQRConfig cfg;
    cfg.update_period = 5;
    cfg.structure = PrecondStructure::Diagonal;
    cfg.divergence = DivergenceSpec{.kind = DivergenceKind::KLNatural};
    cfg.inner.steps = 3;
    cfg.inner.lr = 1e-3;

    Dataset data = make_blobs(3, 32, 3, 2);
    Network net = make_mlp(2, {4}, 3);
    LLQRTrainer trainer(net, init_theta(net, 5), OuterConfig{}, cfg);
    BatchSampler sampler(data, 8, 11);
    for (int k = 0; k < 12; ++k) {
      auto b = sampler.next();
      writer.write(trainer.step(b.x, std::make_shared<SoftmaxCrossEntropyLoss>(b.labels)),
                   sampler.epoch());
    }
  }
  CHECK(strip_wall("/tmp/llqr_metrics_0.csv") == strip_wall("/tmp/llqr_metrics_1.csv"));
}
