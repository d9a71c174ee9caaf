#pragma once

#include <string>

#include "llqr/network.hpp"

namespace llqr {

// Network description file: JSON with a master seed and an ordered layer list.
//   { "seed": 7,
//     "layers": [ {"kind": "affine", "in": 2, "out": 16},
//                 {"kind": "tanh", "dim": 16},
//                 {"kind": "affine", "in": 16, "out": 3} ] }
// Supported kinds: "affine" (optional "bias": true) and the elementwise
// activations "identity" | "tanh" | "sigmoid" | "relu" | "softplus" with a
// "dim" field.
struct NetworkFile {
  Network net;
  Vector theta0;  // seeded initialization
  unsigned seed = 0;
};

NetworkFile load_network_file(const std::string& path);
NetworkFile parse_network_json(const std::string& text);

// Seeded initialization for an existing stack: affine kernels draw from
// N(0, 1/in_dim), biases start at zero, composite layers at zero.
Vector init_theta(const Network& net, unsigned seed);

// Convenience builder for the MLP experiments.
Network make_mlp(int in_dim, const std::vector<int>& hidden, int out_dim,
                 Activation act = Activation::Tanh);

}  // namespace llqr
