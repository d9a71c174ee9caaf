#include "llqr/divergence.hpp"

#include <cmath>
#include <functional>
#include <sstream>
#include <utility>

namespace llqr {

// ---------------------------------------------------------------------------
// Spec parsing

DivergenceSpec DivergenceSpec::parse(const std::string& s) {
  DivergenceSpec spec;
  if (s == "euclidean") {
    spec.kind = DivergenceKind::Euclidean;
  } else if (s.rfind("newton", 0) == 0) {
    spec.kind = DivergenceKind::DampedNewton;
    auto colon = s.find(':');
    spec.newton_lambda = colon == std::string::npos ? 0.0 : std::stod(s.substr(colon + 1));
    if (spec.newton_lambda < 0) throw ConfigError("newton damping must be >= 0");
  } else if (s == "gauss-newton") {
    spec.kind = DivergenceKind::GaussNewton;
  } else if (s == "kl") {
    spec.kind = DivergenceKind::KLNatural;
  } else if (s.rfind("intermediate", 0) == 0) {
    spec.kind = DivergenceKind::IntermediateLayer;
    auto colon = s.find(':');
    if (colon != std::string::npos) {
      std::stringstream ss(s.substr(colon + 1));
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) spec.layers.push_back(std::stoi(tok));
      }
    }
    if (spec.layers.empty()) throw ConfigError("intermediate divergence needs a layer list");
  } else {
    throw ConfigError("unknown divergence: " + s);
  }
  return spec;
}

std::string DivergenceSpec::to_string() const {
  switch (kind) {
    case DivergenceKind::Euclidean: return "euclidean";
    case DivergenceKind::DampedNewton: {
      std::ostringstream os;
      os << "newton:" << newton_lambda;
      return os.str();
    }
    case DivergenceKind::GaussNewton: return "gauss-newton";
    case DivergenceKind::KLNatural: return "kl";
    case DivergenceKind::IntermediateLayer: {
      std::ostringstream os;
      os << "intermediate:";
      for (size_t i = 0; i < layers.size(); ++i) os << (i ? "," : "") << layers[i];
      return os.str();
    }
  }
  return "?";
}

// ---------------------------------------------------------------------------
// BoundDivergence defaults

Matrix BoundDivergence::layer_x_grad(int i, const Matrix& xi) const {
  (void)i;
  return Matrix::Zero(xi.rows(), xi.cols());
}

Vector BoundDivergence::layer_theta_grad(int i, ConstVecRef thi) const {
  (void)i;
  return Vector::Zero(thi.size());
}

Matrix BoundDivergence::layer_xx(int i, const Matrix& dxi) const {
  (void)i;
  return Matrix::Zero(dxi.rows(), dxi.cols());
}

Vector BoundDivergence::layer_tt(int i, ConstVecRef dthi) const {
  (void)i;
  return Vector::Zero(dthi.size());
}

namespace {

// D = (1/2) ||theta - theta^k||^2
class EuclideanDivergence final : public BoundDivergence {
 public:
  EuclideanDivergence(Network net, TrajectoryPtr base) : BoundDivergence(std::move(net), std::move(base)) {}
  DivergenceKind kind() const override { return DivergenceKind::Euclidean; }

  double terminal_value(const Matrix&) const override { return 0.0; }
  Matrix terminal_grad(const Matrix& xN) const override {
    return Matrix::Zero(xN.rows(), xN.cols());
  }
  Matrix terminal_hess(const Matrix& dxN) const override {
    return Matrix::Zero(dxN.rows(), dxN.cols());
  }
  double layer_value(int i, const Matrix&, ConstVecRef thi) const override {
    return 0.5 * (thi - net_.theta_slice(base_->theta, i)).squaredNorm();
  }
  Vector layer_theta_grad(int i, ConstVecRef thi) const override {
    return thi - net_.theta_slice(base_->theta, i);
  }
  Vector layer_tt(int, ConstVecRef dthi) const override { return dthi; }
};

// Bregman gap of the lambda-regularized loss; costate equals the backprop
// adjoint, so the blocks carry the exact loss Hessian.
class DampedNewtonDivergence final : public BoundDivergence {
 public:
  DampedNewtonDivergence(Network net, TrajectoryPtr base, LossPtr loss, double lambda)
      : BoundDivergence(std::move(net), std::move(base)),
        loss_(std::move(loss)),
        lambda_(lambda),
        base_value_(loss_->value(base_->terminal())),
        base_grad_(gradient(net_, *loss_, *base_)) {}

  DivergenceKind kind() const override { return DivergenceKind::DampedNewton; }

  double terminal_value(const Matrix& xN) const override {
    return loss_->value(xN) - base_value_;
  }
  Matrix terminal_grad(const Matrix& xN) const override { return loss_->grad(xN); }
  Matrix terminal_hess(const Matrix& dxN) const override {
    return loss_->hess_action(base_->terminal(), dxN);
  }
  double layer_value(int i, const Matrix&, ConstVecRef thi) const override {
    Vector d = thi - net_.theta_slice(base_->theta, i);
    return 0.5 * lambda_ * d.squaredNorm() - slice(base_grad_, i).dot(d);
  }
  Vector layer_theta_grad(int i, ConstVecRef thi) const override {
    Vector d = thi - net_.theta_slice(base_->theta, i);
    return lambda_ * d - slice(base_grad_, i);
  }
  Vector layer_tt(int, ConstVecRef dthi) const override { return lambda_ * dthi; }

 private:
  ConstVecRef slice(const Vector& v, int i) const {
    return v.segment(net_.param_offset(i), net_.layer_param_dim(i));
  }
  LossPtr loss_;
  double lambda_;
  double base_value_;
  Vector base_grad_;
};

// Output-space metric W = J_r^T J_r frozen at the basepoint.
class GaussNewtonDivergence final : public BoundDivergence {
 public:
  GaussNewtonDivergence(Network net, TrajectoryPtr base, ResidualPtr residual)
      : BoundDivergence(std::move(net), std::move(base)), residual_(std::move(residual)) {}

  DivergenceKind kind() const override { return DivergenceKind::GaussNewton; }

  double terminal_value(const Matrix& xN) const override {
    Matrix jd = residual_->jvp(base_->terminal(), xN - base_->terminal());
    return 0.5 * jd.squaredNorm() / xN.rows();
  }
  Matrix terminal_grad(const Matrix& xN) const override {
    const Matrix& xb = base_->terminal();
    return residual_->vjp(xb, residual_->jvp(xb, xN - xb)) / xN.rows();
  }
  Matrix terminal_hess(const Matrix& dxN) const override {
    const Matrix& xb = base_->terminal();
    return residual_->vjp(xb, residual_->jvp(xb, dxN)) / dxN.rows();
  }

 private:
  ResidualPtr residual_;
};

// KL between the output distributions at the basepoint and at theta; the
// terminal Hessian is the output-space Fisher.
class KLDivergence final : public BoundDivergence {
 public:
  KLDivergence(Network net, TrajectoryPtr base, OutputHead head)
      : BoundDivergence(std::move(net), std::move(base)), head_(head) {
    if (head_ == OutputHead::Softmax) {
      pi_ = softmax_rows(base_->terminal());
      base_lse_.resize(base_->batch);
      for (int b = 0; b < base_->batch; ++b) {
        base_lse_(b) = logsumexp(base_->terminal().row(b));
      }
    }
  }

  DivergenceKind kind() const override { return DivergenceKind::KLNatural; }

  double terminal_value(const Matrix& xN) const override {
    const Matrix& xb = base_->terminal();
    if (head_ == OutputHead::Gaussian) {
      return 0.5 * (xN - xb).squaredNorm() / xN.rows();
    }
    double acc = 0;
    for (Eigen::Index b = 0; b < xN.rows(); ++b) {
      acc += logsumexp(xN.row(b)) - base_lse_(b) - pi_.row(b).dot(xN.row(b) - xb.row(b));
    }
    return acc / xN.rows();
  }

  Matrix terminal_grad(const Matrix& xN) const override {
    if (head_ == OutputHead::Gaussian) {
      return (xN - base_->terminal()) / xN.rows();
    }
    return (softmax_rows(xN) - pi_) / xN.rows();
  }

  Matrix terminal_hess(const Matrix& dxN) const override {
    if (head_ == OutputHead::Gaussian) {
      return dxN / dxN.rows();
    }
    Matrix out(dxN.rows(), dxN.cols());
    for (Eigen::Index b = 0; b < dxN.rows(); ++b) {
      double inner = pi_.row(b).dot(dxN.row(b));
      out.row(b) = (pi_.row(b).array() * (dxN.row(b).array() - inner)).matrix();
    }
    return out / dxN.rows();
  }

 private:
  static double logsumexp(const Eigen::RowVectorXd& z) {
    double m = z.maxCoeff();
    return m + std::log((z.array() - m).exp().sum());
  }
  OutputHead head_;
  Matrix pi_;
  Vector base_lse_;
};

// Quadratic activation metrics on a chosen layer set, identity-weighted.
class IntermediateDivergence final : public BoundDivergence {
 public:
  IntermediateDivergence(Network net, TrajectoryPtr base, std::vector<int> layers, double weight)
      : BoundDivergence(std::move(net), std::move(base)), weight_(weight) {
    for (int k : layers) {
      if (k < 1 || k > net_.depth()) {
        throw ConfigError("intermediate layer index " + std::to_string(k) + " out of range");
      }
      if (k == net_.depth()) {
        terminal_term_ = true;
      } else {
        in_set_.insert(in_set_.end(), k);
      }
    }
  }

  DivergenceKind kind() const override { return DivergenceKind::IntermediateLayer; }

  double terminal_value(const Matrix& xN) const override {
    if (!terminal_term_) return 0.0;
    return 0.5 * weight_ * (xN - base_->terminal()).squaredNorm() / xN.rows();
  }
  Matrix terminal_grad(const Matrix& xN) const override {
    if (!terminal_term_) return Matrix::Zero(xN.rows(), xN.cols());
    return weight_ * (xN - base_->terminal()) / xN.rows();
  }
  Matrix terminal_hess(const Matrix& dxN) const override {
    if (!terminal_term_) return Matrix::Zero(dxN.rows(), dxN.cols());
    return weight_ * dxN / dxN.rows();
  }
  double layer_value(int i, const Matrix& xi, ConstVecRef) const override {
    if (!contains(i)) return 0.0;
    return 0.5 * weight_ * (xi - base_->x[i]).squaredNorm() / xi.rows();
  }
  Matrix layer_x_grad(int i, const Matrix& xi) const override {
    if (!contains(i)) return Matrix::Zero(xi.rows(), xi.cols());
    return weight_ * (xi - base_->x[i]) / xi.rows();
  }
  Matrix layer_xx(int i, const Matrix& dxi) const override {
    if (!contains(i)) return Matrix::Zero(dxi.rows(), dxi.cols());
    return weight_ * dxi / dxi.rows();
  }

 private:
  bool contains(int i) const {
    for (int k : in_set_)
      if (k == i) return true;
    return false;
  }
  std::vector<int> in_set_;
  bool terminal_term_ = false;
  double weight_;
};

}  // namespace

DivergencePtr bind_divergence(const DivergenceSpec& spec, const Network& net, TrajectoryPtr base,
                              LossPtr loss, ResidualPtr residual) {
  switch (spec.kind) {
    case DivergenceKind::Euclidean:
      return std::make_shared<EuclideanDivergence>(net, std::move(base));
    case DivergenceKind::DampedNewton:
      if (!loss) throw ConfigError("newton divergence needs the terminal loss");
      return std::make_shared<DampedNewtonDivergence>(net, std::move(base), std::move(loss),
                                                      spec.newton_lambda);
    case DivergenceKind::GaussNewton:
      if (!residual) throw ConfigError("gauss-newton divergence needs a residual map");
      return std::make_shared<GaussNewtonDivergence>(net, std::move(base), std::move(residual));
    case DivergenceKind::KLNatural:
      return std::make_shared<KLDivergence>(net, std::move(base), spec.head);
    case DivergenceKind::IntermediateLayer:
      return std::make_shared<IntermediateDivergence>(net, std::move(base), spec.layers,
                                                      spec.layer_weight);
  }
  throw ConfigError("unhandled divergence kind");
}

// ---------------------------------------------------------------------------

double divergence_value(const Network& net, const BoundDivergence& div, ConstVecRef theta,
                        const Matrix& x0) {
  Trajectory t = forward(net, theta, x0);
  double acc = div.terminal_value(t.terminal());
  for (int i = 0; i < net.depth(); ++i) {
    acc += div.layer_value(i, t.x[i], net.theta_slice(theta, i));
  }
  return acc;
}

Vector divergence_gradient(const Network& net, const BoundDivergence& div, ConstVecRef theta,
                           const Matrix& x0) {
  Trajectory t = forward(net, theta, x0);
  Vector g(net.param_dim());
  Matrix w = div.terminal_grad(t.terminal());
  for (int i = net.depth() - 1; i >= 0; --i) {
    ConstVecRef th = net.theta_slice(theta, i);
    if (net.layer_param_dim(i) > 0) {
      g.segment(net.param_offset(i), net.layer_param_dim(i)) =
          net.layer(i).vjp_theta(t.x[i], th, w) + div.layer_theta_grad(i, th);
    }
    w = net.layer(i).vjp_x(t.x[i], th, w);
    if (i > 0) {
      w += div.layer_x_grad(i, t.x[i]);
    }
  }
  return g;
}

namespace {

Matrix fd_curvature(const Network& net, const BoundDivergence& div, ConstVecRef theta,
                    const Matrix& x0, double scale) {
  const int p = net.param_dim();
  Matrix h(p, p);
  Vector th = theta;
  for (int j = 0; j < p; ++j) {
    const double step = scale * (1.0 + std::abs(theta(j)));
    th(j) = theta(j) + step;
    Vector gp = divergence_gradient(net, div, th, x0);
    th(j) = theta(j) - step;
    Vector gm = divergence_gradient(net, div, th, x0);
    th(j) = theta(j);
    h.col(j) = (gp - gm) / (2.0 * step);
  }
  return h;
}

}  // namespace

Matrix dense_curvature(const Network& net, const BoundDivergence& div, ConstVecRef theta,
                       const Matrix& x0, bool richardson, int cap) {
  if (net.param_dim() > cap) {
    throw CapacityError("dense_curvature: param dim " + std::to_string(net.param_dim()) +
                        " exceeds cap " + std::to_string(cap));
  }
  const double h0 = 1e-5;
  Matrix h = fd_curvature(net, div, theta, x0, h0);
  if (richardson) {
    Matrix h2 = fd_curvature(net, div, theta, x0, h0 / 2.0);
    h = (4.0 * h2 - h) / 3.0;
  }
  return 0.5 * (h + h.transpose());
}

// ---------------------------------------------------------------------------

AdjointState adjoint_recursion(const BoundDivergence& div, const Linearization& lin) {
  const int n = lin.depth();
  AdjointState adj;
  adj.p.resize(n + 1);
  adj.p[n] = div.terminal_grad(lin.traj().terminal());
  for (int i = n - 1; i >= 1; --i) {
    adj.p[i] = lin.At(i, adj.p[i + 1]) + div.layer_x_grad(i, lin.traj().x[i]);
  }
  return adj;
}

// ---------------------------------------------------------------------------

CostBlocks::CostBlocks(Network net, TrajectoryPtr traj, DivergencePtr div, LossPtr loss,
                       std::shared_ptr<const AdjointState> adj, Vector damping)
    : net_(std::move(net)),
      traj_(std::move(traj)),
      div_(std::move(div)),
      loss_(std::move(loss)),
      adj_(std::move(adj)),
      damping_(std::move(damping)) {
  if (damping_.size() != net_.depth()) {
    throw DimensionError("damping must have one entry per layer");
  }
  if ((damping_.array() < 0).any()) {
    throw ConfigError("damping must be nonnegative");
  }
  gN_ = loss_->grad(traj_->terminal());
}

Matrix CostBlocks::Q(int i, const Matrix& dx) const {
  const Layer& layer = net_.layer(i);
  return div_->layer_xx(i, dx) +
         layer.hess_xx(traj_->x[i], net_.theta_slice(traj_->theta, i), adj_->p[i + 1], dx);
}

Vector CostBlocks::M(int i, const Matrix& dx) const {
  const Layer& layer = net_.layer(i);
  return layer.hess_tx(traj_->x[i], net_.theta_slice(traj_->theta, i), adj_->p[i + 1], dx);
}

Matrix CostBlocks::Mt(int i, ConstVecRef dtheta) const {
  const Layer& layer = net_.layer(i);
  return layer.hess_xt(traj_->x[i], net_.theta_slice(traj_->theta, i), adj_->p[i + 1], dtheta);
}

Vector CostBlocks::R(int i, ConstVecRef dtheta) const {
  const Layer& layer = net_.layer(i);
  Vector r = div_->layer_tt(i, dtheta) +
             layer.hess_tt(traj_->x[i], net_.theta_slice(traj_->theta, i), adj_->p[i + 1], dtheta);
  if (damping_(i) != 0.0) {
    r += damping_(i) * dtheta;
  }
  return r;
}

Matrix CostBlocks::QN(const Matrix& dxN) const { return div_->terminal_hess(dxN); }

double CostBlocks::stage_cost(int i, const Matrix& dx, ConstVecRef dtheta) const {
  double c = 0.5 * dot(dx, Q(i, dx));
  if (dtheta.size() > 0) {
    c += 0.5 * dtheta.dot(R(i, dtheta)) + dtheta.dot(M(i, dx));
  }
  return c;
}

double CostBlocks::terminal_cost(const Matrix& dxN) const {
  return dot(gN_, dxN) + 0.5 * dot(dxN, QN(dxN));
}

namespace {

// Materializes a symmetric batched state operator by probing per-sample unit
// perturbations; makes no structural assumption about the action.
Matrix dense_state_op(int batch, int dim, int cap, const std::string& what,
                      const std::function<Matrix(const Matrix&)>& op) {
  if (batch * dim > cap) {
    throw CapacityError(what + ": flattened state exceeds cap");
  }
  Matrix out(batch * dim, batch * dim);
  Matrix probe = Matrix::Zero(batch, dim);
  for (int b = 0; b < batch; ++b) {
    for (int j = 0; j < dim; ++j) {
      probe(b, j) = 1.0;
      out.col(b * dim + j) = flatten_rows(op(probe));
      probe(b, j) = 0.0;
    }
  }
  return out;
}

}  // namespace

Matrix CostBlocks::dense_Q(int i, int cap) const {
  return dense_state_op(batch(), net_.state_dim(i), cap, "dense_Q",
                        [&](const Matrix& dx) { return Q(i, dx); });
}

Matrix CostBlocks::dense_QN(int cap) const {
  return dense_state_op(batch(), net_.state_dim(net_.depth()), cap, "dense_QN",
                        [&](const Matrix& dx) { return QN(dx); });
}

Matrix CostBlocks::dense_M(int i, int cap) const {
  const int p = net_.layer_param_dim(i);
  const int d = net_.state_dim(i);
  if (p > cap || batch() * d > cap) {
    throw CapacityError("dense_M: dims exceed cap");
  }
  Matrix mt(batch() * d, p);
  Vector e = Vector::Zero(p);
  for (int j = 0; j < p; ++j) {
    e(j) = 1.0;
    mt.col(j) = flatten_rows(Mt(i, e));
    e(j) = 0.0;
  }
  return mt.transpose();
}

Matrix CostBlocks::dense_R(int i, int cap) const {
  const int p = net_.layer_param_dim(i);
  if (p > cap) {
    throw CapacityError("dense_R: dims exceed cap");
  }
  Matrix r(p, p);
  Vector e = Vector::Zero(p);
  for (int j = 0; j < p; ++j) {
    e(j) = 1.0;
    r.col(j) = R(i, e);
    e(j) = 0.0;
  }
  return r;
}

CostBlocksPtr cost_blocks(const Network& net, TrajectoryPtr traj, DivergencePtr div, LossPtr loss,
                          std::shared_ptr<const AdjointState> adj, Vector damping) {
  return std::make_shared<CostBlocks>(net, std::move(traj), std::move(div), std::move(loss),
                                      std::move(adj), std::move(damping));
}

CostBlocksPtr cost_blocks(const Network& net, TrajectoryPtr traj, DivergencePtr div, LossPtr loss,
                          double damping) {
  Linearization lin(net, traj);
  auto adj = std::make_shared<AdjointState>(adjoint_recursion(*div, lin));
  return cost_blocks(net, std::move(traj), std::move(div), std::move(loss), std::move(adj),
                     Vector::Constant(net.depth(), damping));
}

double hamiltonian_value(const Network& net, const BoundDivergence& div,
                         const std::vector<Matrix>& x, ConstVecRef theta,
                         const AdjointState& adj) {
  double acc = div.terminal_value(x.back());
  for (int i = 0; i < net.depth(); ++i) {
    ConstVecRef th = net.theta_slice(theta, i);
    acc += div.layer_value(i, x[i], th);
    acc += dot(adj.p[i + 1], net.layer(i).forward(x[i], th) - x[i + 1]);
  }
  return acc;
}

}  // namespace llqr
