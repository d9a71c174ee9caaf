#include "llqr/netfile.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace llqr {

Vector init_theta(const Network& net, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector theta = Vector::Zero(net.param_dim());
  for (int i = 0; i < net.depth(); ++i) {
    const Layer& layer = net.layer(i);
    if (layer.kind() != LayerKind::Affine) continue;
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.in_dim()));
    const int kernel = layer.out_dim() * layer.in_dim();
    for (int j = 0; j < kernel; ++j) {
      theta(net.param_offset(i) + j) = scale * gauss(rng);
    }
  }
  return theta;
}

Network make_mlp(int in_dim, const std::vector<int>& hidden, int out_dim, Activation act) {
  std::vector<LayerPtr> layers;
  int d = in_dim;
  for (int h : hidden) {
    layers.push_back(std::make_shared<AffineLayer>(d, h));
    layers.push_back(std::make_shared<ElementwiseLayer>(act, h));
    d = h;
  }
  layers.push_back(std::make_shared<AffineLayer>(d, out_dim));
  return Network(std::move(layers));
}

NetworkFile parse_network_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network file is not valid JSON: ") + e.what());
  }

  const unsigned seed = j.value("seed", 0u);
  std::vector<LayerPtr> layers;
  for (const auto& lj : j.at("layers")) {
    const std::string kind = lj.at("kind").get<std::string>();
    if (kind == "affine") {
      layers.push_back(std::make_shared<AffineLayer>(lj.at("in").get<int>(),
                                                     lj.at("out").get<int>(),
                                                     lj.value("bias", true)));
    } else {
      layers.push_back(std::make_shared<ElementwiseLayer>(activation_from_string(kind),
                                                          lj.at("dim").get<int>()));
    }
  }
  Network net(std::move(layers));
  Vector theta0 = init_theta(net, seed);
  return NetworkFile{std::move(net), std::move(theta0), seed};
}

NetworkFile load_network_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open network file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_network_json(ss.str());
}

}  // namespace llqr
