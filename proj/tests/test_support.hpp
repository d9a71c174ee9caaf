#pragma once

#include <memory>
#include <random>

#include "llqr/netfile.hpp"
#include "llqr/network.hpp"

namespace llqr::testing {

// Seeded generators for the property-style suites.
class Rng {
 public:
  explicit Rng(unsigned seed) : rng_(seed) {}

  double gauss() { return gauss_(rng_); }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * unif_(rng_);
  }
  int uniform_int(int lo, int hi) {  // inclusive
    return std::uniform_int_distribution<int>(lo, hi)(rng_);
  }

  Matrix matrix(int r, int c) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = gauss();
    return m;
  }

  Vector vector(int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = gauss();
    return v;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

struct RandomNet {
  Network net;
  Vector theta;
  Matrix x0;
};

// Small random affine/tanh stack with seeded weights and inputs.
inline RandomNet random_net(Rng& rng, int max_layers = 4, int max_dim = 5, int max_batch = 3,
                            bool smooth_only = true) {
  const int blocks = rng.uniform_int(1, max_layers);
  std::vector<LayerPtr> layers;
  int d = rng.uniform_int(1, max_dim);
  const int in_dim = d;
  for (int i = 0; i < blocks; ++i) {
    const int out = rng.uniform_int(1, max_dim);
    layers.push_back(std::make_shared<AffineLayer>(d, out));
    d = out;
    if (i + 1 < blocks) {
      const Activation act = smooth_only
                                 ? (rng.uniform_int(0, 1) ? Activation::Tanh : Activation::Sigmoid)
                                 : Activation::Relu;
      layers.push_back(std::make_shared<ElementwiseLayer>(act, d));
    }
  }
  Network net(std::move(layers));
  RandomNet out{net, 0.7 * rng.vector(net.param_dim()), rng.matrix(rng.uniform_int(1, max_batch), in_dim)};
  return out;
}

// Softmax classifier stack with a bounded parameter count.
inline RandomNet random_softmax_net(Rng& rng, int max_params = 30, int classes = 3) {
  for (;;) {
    const int in = rng.uniform_int(1, 3);
    const int hidden = rng.uniform_int(1, 3);
    std::vector<LayerPtr> layers;
    layers.push_back(std::make_shared<AffineLayer>(in, hidden));
    layers.push_back(std::make_shared<ElementwiseLayer>(Activation::Tanh, hidden));
    layers.push_back(std::make_shared<AffineLayer>(hidden, classes));
    Network net(std::move(layers));
    if (net.param_dim() > max_params) continue;
    return RandomNet{net, 0.6 * rng.vector(net.param_dim()),
                     rng.matrix(rng.uniform_int(1, 4), in)};
  }
}

}  // namespace llqr::testing
