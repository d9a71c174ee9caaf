#include "llqr/precond.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <utility>

namespace llqr {

PrecondStructure structure_from_string(const std::string& s) {
  if (s == "diag") return PrecondStructure::Diagonal;
  if (s == "kfac") return PrecondStructure::KFac;
  if (s == "ekfac") return PrecondStructure::EKFac;
  if (s == "dense") return PrecondStructure::Dense;
  throw ConfigError("unknown preconditioner structure: " + s);
}

std::string to_string(PrecondStructure s) {
  switch (s) {
    case PrecondStructure::Diagonal: return "diag";
    case PrecondStructure::KFac: return "kfac";
    case PrecondStructure::EKFac: return "ekfac";
    case PrecondStructure::Dense: return "dense";
  }
  return "?";
}

namespace {

int block_param_count(const PrecondBlock& b) {
  if (auto* d = std::get_if<DiagBlock>(&b)) return static_cast<int>(d->d.size());
  if (auto* k = std::get_if<KFacBlock>(&b))
    return static_cast<int>(k->C.size() + k->D.size());
  if (auto* e = std::get_if<EKFacBlock>(&b))
    return static_cast<int>(e->QL.size() + e->QR.size() + e->s.size());
  return static_cast<int>(std::get<DenseBlock>(b).U.size());
}

}  // namespace

Preconditioner Preconditioner::identity(const Network& net, PrecondStructure s, int dense_cap) {
  return identity(net.param_groups(), s, dense_cap);
}

Preconditioner Preconditioner::identity(std::vector<GroupLayout> groups, PrecondStructure s,
                                        int dense_cap) {
  Preconditioner u;
  u.structure_ = s;
  u.groups_ = std::move(groups);
  u.blocks_.reserve(u.groups_.size());
  for (const GroupLayout& g : u.groups_) {
    const bool structured = g.is_kernel && (s == PrecondStructure::KFac || s == PrecondStructure::EKFac);
    if (s == PrecondStructure::Dense) {
      if (g.size() > dense_cap) {
        throw CapacityError("dense preconditioner block of size " + std::to_string(g.size()) +
                            " exceeds cap");
      }
      u.blocks_.emplace_back(DenseBlock{Matrix::Identity(g.size(), g.size())});
    } else if (structured && s == PrecondStructure::KFac) {
      u.blocks_.emplace_back(KFacBlock{Matrix::Identity(g.rows, g.rows),
                                       Matrix::Identity(g.cols, g.cols)});
    } else if (structured && s == PrecondStructure::EKFac) {
      u.blocks_.emplace_back(EKFacBlock{Matrix::Identity(g.rows, g.rows),
                                        Matrix::Identity(g.cols, g.cols),
                                        Vector::Ones(g.size())});
    } else {
      u.blocks_.emplace_back(DiagBlock{Vector::Ones(g.size())});
    }
    u.theta_dim_ = std::max(u.theta_dim_, g.offset + g.size());
    u.num_params_ += block_param_count(u.blocks_.back());
  }
  return u;
}

Vector Preconditioner::apply(ConstVecRef g) const {
  if (g.size() != theta_dim_) {
    throw DimensionError("preconditioner/gradient layout mismatch: got " +
                         std::to_string(g.size()) + ", expected " + std::to_string(theta_dim_));
  }
  Vector out = Vector::Zero(g.size());
  for (size_t idx = 0; idx < groups_.size(); ++idx) {
    const GroupLayout& grp = groups_[idx];
    ConstVecRef gi = g.segment(grp.offset, grp.size());
    auto oi = out.segment(grp.offset, grp.size());
    if (auto* d = std::get_if<DiagBlock>(&blocks_[idx])) {
      oi = (d->d.array() * gi.array()).matrix();
    } else if (auto* k = std::get_if<KFacBlock>(&blocks_[idx])) {
      Eigen::Map<const Matrix> x(gi.data(), grp.rows, grp.cols);
      Matrix y = k->C * x * k->D.transpose();
      oi = Eigen::Map<const Vector>(y.data(), y.size());
    } else if (auto* e = std::get_if<EKFacBlock>(&blocks_[idx])) {
      Eigen::Map<const Matrix> x(gi.data(), grp.rows, grp.cols);
      Matrix xh = e->QL.transpose() * x * e->QR;
      Eigen::Map<Vector>(xh.data(), xh.size()).array() *= e->s.array();
      Matrix y = e->QL * xh * e->QR.transpose();
      oi = Eigen::Map<const Vector>(y.data(), y.size());
    } else {
      oi = std::get<DenseBlock>(blocks_[idx]).U * gi;
    }
  }
  return out;
}

Vector Preconditioner::params() const {
  Vector v(num_params_);
  int at = 0;
  auto put = [&](const double* data, Eigen::Index n) {
    v.segment(at, n) = Eigen::Map<const Vector>(data, n);
    at += static_cast<int>(n);
  };
  for (const PrecondBlock& b : blocks_) {
    if (auto* d = std::get_if<DiagBlock>(&b)) {
      put(d->d.data(), d->d.size());
    } else if (auto* k = std::get_if<KFacBlock>(&b)) {
      put(k->C.data(), k->C.size());
      put(k->D.data(), k->D.size());
    } else if (auto* e = std::get_if<EKFacBlock>(&b)) {
      put(e->QL.data(), e->QL.size());
      put(e->QR.data(), e->QR.size());
      put(e->s.data(), e->s.size());
    } else {
      const DenseBlock& dn = std::get<DenseBlock>(b);
      put(dn.U.data(), dn.U.size());
    }
  }
  return v;
}

void Preconditioner::set_params(ConstVecRef v) {
  if (v.size() != num_params_) {
    throw DimensionError("preconditioner parameter vector size mismatch");
  }
  int at = 0;
  auto take = [&](double* data, Eigen::Index n) {
    Eigen::Map<Vector>(data, n) = v.segment(at, n);
    at += static_cast<int>(n);
  };
  for (PrecondBlock& b : blocks_) {
    if (auto* d = std::get_if<DiagBlock>(&b)) {
      take(d->d.data(), d->d.size());
    } else if (auto* k = std::get_if<KFacBlock>(&b)) {
      take(k->C.data(), k->C.size());
      take(k->D.data(), k->D.size());
    } else if (auto* e = std::get_if<EKFacBlock>(&b)) {
      take(e->QL.data(), e->QL.size());
      take(e->QR.data(), e->QR.size());
      take(e->s.data(), e->s.size());
    } else {
      DenseBlock& dn = std::get<DenseBlock>(b);
      take(dn.U.data(), dn.U.size());
    }
  }
}

Preconditioner ema_update(const Preconditioner& u_old, const Preconditioner& u_fit, double beta) {
  if (u_old.structure() != u_fit.structure() || u_old.groups() != u_fit.groups()) {
    throw ConfigError("ema_update: preconditioner structures do not match");
  }
  if (beta < 0.0 || beta > 1.0) {
    throw ConfigError("ema_update: beta must be in [0, 1]");
  }
  Preconditioner out = u_old;
  out.set_params(beta * u_old.params() + (1.0 - beta) * u_fit.params());
  return out;
}

nlohmann::json Preconditioner::to_json() const {
  nlohmann::json j;
  j["structure"] = llqr::to_string(structure_);
  j["layout"] = nlohmann::json::array();
  for (const GroupLayout& g : groups_) {
    j["layout"].push_back({{"layer", g.layer},
                           {"kernel", g.is_kernel},
                           {"offset", g.offset},
                           {"rows", g.rows},
                           {"cols", g.cols}});
  }
  Vector p = params();
  j["params"] = std::vector<double>(p.data(), p.data() + p.size());
  return j;
}

void save_preconditioner(const Preconditioner& u, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write preconditioner checkpoint: " + path);
  out << u.to_json().dump(2) << '\n';
}

Preconditioner load_preconditioner(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open preconditioner checkpoint: " + path);
  nlohmann::json j;
  in >> j;
  return Preconditioner::from_json(j);
}

Preconditioner Preconditioner::from_json(const nlohmann::json& j) {
  std::vector<GroupLayout> groups;
  for (const auto& g : j.at("layout")) {
    groups.push_back(GroupLayout{g.at("layer").get<int>(), g.at("kernel").get<bool>(),
                                 g.at("offset").get<int>(), g.at("rows").get<int>(),
                                 g.at("cols").get<int>()});
  }
  Preconditioner u =
      identity(std::move(groups), structure_from_string(j.at("structure").get<std::string>()));
  std::vector<double> p = j.at("params").get<std::vector<double>>();
  if (static_cast<int>(p.size()) != u.num_params()) {
    throw ConfigError("preconditioner checkpoint parameter count mismatch");
  }
  u.set_params(Eigen::Map<const Vector>(p.data(), p.size()));
  return u;
}

}  // namespace llqr
