#pragma once

#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "llqr/network.hpp"

namespace llqr {

enum class PrecondStructure { Diagonal, KFac, EKFac, Dense };

PrecondStructure structure_from_string(const std::string& s);
std::string to_string(PrecondStructure s);

// One scalar per parameter coordinate.
struct DiagBlock {
  Vector d;
};

// Y = C X D^T on the reshaped kernel gradient X (rows x cols).
struct KFacBlock {
  Matrix C;  // rows x rows
  Matrix D;  // cols x cols
};

// vec(Y) = (QR kron QL) diag(s) (QR kron QL)^T vec(X). The factors are
// learned as general matrices; the form is a parameterization, not an
// eigendecomposition of anything.
struct EKFacBlock {
  Matrix QL;  // rows x rows
  Matrix QR;  // cols x cols
  Vector s;   // rows*cols
};

// Full square block; toy problems only.
struct DenseBlock {
  Matrix U;
};

using PrecondBlock = std::variant<DiagBlock, KFacBlock, EKFacBlock, DenseBlock>;

// Block-structured learned inverse preconditioner U = diag(U_0..U_{N-1}).
// Kernel-shaped groups take the requested structure; bias/scale vectors are
// always diagonal under kfac/ekfac. apply() returns U g; callers choose the
// update sign.
class Preconditioner {
 public:
  Preconditioner() = default;

  static Preconditioner identity(const Network& net, PrecondStructure s,
                                 int dense_cap = kDenseCap);
  static Preconditioner identity(std::vector<GroupLayout> groups, PrecondStructure s,
                                 int dense_cap = kDenseCap);

  PrecondStructure structure() const { return structure_; }
  const std::vector<GroupLayout>& groups() const { return groups_; }
  int theta_dim() const { return theta_dim_; }

  Vector apply(ConstVecRef g) const;

  // Flat view of every factor entry, for the inner-loop optimizer.
  int num_params() const { return num_params_; }
  Vector params() const;
  void set_params(ConstVecRef v);

  nlohmann::json to_json() const;
  static Preconditioner from_json(const nlohmann::json& j);

  const PrecondBlock& block(size_t idx) const { return blocks_[idx]; }

 private:
  PrecondStructure structure_ = PrecondStructure::Diagonal;
  std::vector<GroupLayout> groups_;
  std::vector<PrecondBlock> blocks_;
  int theta_dim_ = 0;
  int num_params_ = 0;
};

// Elementwise convex combination beta*u_old + (1-beta)*u_fit of every factor
// entry; structures must match exactly.
Preconditioner ema_update(const Preconditioner& u_old, const Preconditioner& u_fit, double beta);

// JSON checkpoint on disk; the layout header is validated on load.
void save_preconditioner(const Preconditioner& u, const std::string& path);
Preconditioner load_preconditioner(const std::string& path);

}  // namespace llqr
