#pragma once

#include "llqr/divergence.hpp"
#include "llqr/network.hpp"

namespace llqr {

enum class CurvatureProvenance { FiniteDifference, Analytic };

// Dense references for equivalence testing, independent of the LQR machinery.
struct DenseCurvature {
  Matrix H;
  Vector g;
  CurvatureProvenance provenance = CurvatureProvenance::FiniteDifference;
};

// -(H + lambda I)^{-1} g via dense factorization.
Vector newton_step_dense(const DenseCurvature& c, double lambda = 0.0);

// -(diag(H) + lambda I)^{-1} g; errors on a nonpositive damped diagonal.
Vector diag_newton_step(const DenseCurvature& c, double lambda = 0.0);

// Exact Fisher information of the network's output distribution with respect
// to theta: the expectation over outcomes is summed in closed form, never
// sampled. Supports softmax-categorical and unit-variance Gaussian heads.
DenseCurvature fisher_dense(const Network& net, ConstVecRef theta, const Matrix& x0,
                            OutputHead head, const TerminalLoss& loss, int cap = kDenseCap);

}  // namespace llqr
