#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace llqr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using ConstVecRef = Eigen::Ref<const Vector>;
using ConstMatRef = Eigen::Ref<const Matrix>;

// Batched activations are stored as (batch, dim) matrices, one sample per row.
// flatten_rows stacks samples: [row 0 | row 1 | ...].
inline Vector flatten_rows(const Matrix& x) {
  Vector v(x.size());
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    v.segment(b * x.cols(), x.cols()) = x.row(b).transpose();
  }
  return v;
}

inline Matrix unflatten_rows(ConstVecRef v, Eigen::Index batch, Eigen::Index dim) {
  if (v.size() != batch * dim) {
    throw std::invalid_argument("unflatten_rows: size mismatch");
  }
  Matrix x(batch, dim);
  for (Eigen::Index b = 0; b < batch; ++b) {
    x.row(b) = v.segment(b * dim, dim).transpose();
  }
  return x;
}

inline double dot(const Matrix& a, const Matrix& b) {
  return (a.array() * b.array()).sum();
}

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FitDivergence : std::runtime_error {
  FitDivergence(const std::string& msg, int iter, double j0, double jt)
      : std::runtime_error(msg), iteration(iter), j_start(j0), j_current(jt) {}
  int iteration;
  double j_start;
  double j_current;
};

// Dense materializations are meant for verification at desk scale only.
inline constexpr int kDenseCap = 512;

}  // namespace llqr
