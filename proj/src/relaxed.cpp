#include "llqr/relaxed.hpp"

#include <cmath>
#include <utility>

namespace llqr {

InnerOpt inner_opt_from_string(const std::string& s) {
  if (s == "sgdm") return InnerOpt::SGDM;
  if (s == "adam") return InnerOpt::Adam;
  throw ConfigError("unknown inner optimizer: " + s);
}

std::string to_string(InnerOpt o) { return o == InnerOpt::SGDM ? "sgdm" : "adam"; }

namespace {

Trajectory restrict_trajectory(const Trajectory& t, int begin, int count) {
  Trajectory out;
  out.theta = t.theta;
  out.batch = count;
  out.x.reserve(t.x.size());
  for (const Matrix& xi : t.x) {
    out.x.push_back(xi.middleRows(begin, count));
  }
  return out;
}

}  // namespace

RelaxedProblem::RelaxedProblem(const Network& net, TrajectoryPtr traj, LossPtr loss,
                               const DivergenceSpec& spec, Vector damping, int chunk_size,
                               ResidualPtr residual)
    : net_(net), batch_(traj->batch) {
  if (!loss) throw ConfigError("relaxed problem needs the terminal loss");
  g_ = llqr::gradient(net_, *loss, *traj);

  if (chunk_size <= 0 || chunk_size > batch_) chunk_size = batch_;
  for (int begin = 0; begin < batch_; begin += chunk_size) {
    const int count = std::min(chunk_size, batch_ - begin);
    TrajectoryPtr sub;
    LossPtr sub_loss;
    ResidualPtr sub_residual;
    if (count == batch_) {
      sub = traj;
      sub_loss = loss;
      sub_residual = residual;
    } else {
      sub = std::make_shared<const Trajectory>(restrict_trajectory(*traj, begin, count));
      sub_loss = loss->restrict_rows(begin, count);
      sub_residual = residual ? residual->restrict_rows(begin, count) : nullptr;
    }
    auto lin = std::make_shared<const Linearization>(net_, sub);
    DivergencePtr div = bind_divergence(spec, net_, sub, sub_loss, sub_residual);
    auto adj = std::make_shared<AdjointState>(adjoint_recursion(*div, *lin));
    CostBlocksPtr blocks = cost_blocks(net_, sub, div, sub_loss, adj, damping);
    const double w = static_cast<double>(count) / batch_;
    chunks_.push_back(Chunk{w, std::move(lin), std::move(blocks)});
    weights_.push_back(w);
  }
}

double RelaxedProblem::chunk_value(const Chunk& c, ConstVecRef dtheta, Vector* dj_dtheta) const {
  const int n = net_.depth();
  const CostBlocks& blocks = *c.blocks;
  const Linearization& lin = *c.lin;

  // Forward rollout of the chunk's linearized dynamics under the controls.
  std::vector<Matrix> dx = lin.roll(dtheta);

  double j = blocks.terminal_cost(dx[n]);
  for (int i = 0; i < n; ++i) {
    j += blocks.stage_cost(i, dx[i], dtheta.segment(net_.param_offset(i), net_.layer_param_dim(i)));
  }
  if (!dj_dtheta) return j;

  // Reverse sweep: exact for the quadratic objective.
  Matrix a = blocks.gN() + blocks.QN(dx[n]);
  for (int i = n - 1; i >= 0; --i) {
    const int p = net_.layer_param_dim(i);
    ConstVecRef dth = dtheta.segment(net_.param_offset(i), p);
    if (p > 0) {
      dj_dtheta->segment(net_.param_offset(i), p) +=
          c.weight * (blocks.R(i, dth) + blocks.M(i, dx[i]) + lin.Bt(i, a));
    }
    if (i > 0) {
      Matrix anext = blocks.Q(i, dx[i]) + lin.At(i, a);
      if (p > 0) anext += blocks.Mt(i, dth);
      a = std::move(anext);
    }
  }
  return j;
}

double RelaxedProblem::objective(const Preconditioner& u) const {
  const Vector dtheta = -u.apply(g_);
  double j = 0.0;
  for (const Chunk& c : chunks_) {
    j += c.weight * chunk_value(c, dtheta, nullptr);
  }
  return j;
}

std::pair<double, Vector> RelaxedProblem::objective_and_gradient(const Preconditioner& u) const {
  const Vector dtheta = -u.apply(g_);
  Vector dj_dtheta = Vector::Zero(net_.param_dim());
  double j = 0.0;
  for (const Chunk& c : chunks_) {
    j += c.weight * chunk_value(c, dtheta, &dj_dtheta);
  }
  return {j, precond_param_gradient(u, g_, dj_dtheta)};
}

// Lifts dJ/d(dtheta) to U's factor entries through dtheta = -U g. gbar below
// is the cotangent of the block output Y, i.e. -dJ/d(dtheta) reshaped.
Vector precond_param_gradient(const Preconditioner& u, ConstVecRef g, ConstVecRef dj_dtheta) {
  Vector grad(u.num_params());
  int at = 0;
  for (size_t idx = 0; idx < u.groups().size(); ++idx) {
    const GroupLayout& grp = u.groups()[idx];
    ConstVecRef gi = g.segment(grp.offset, grp.size());
    ConstVecRef di = dj_dtheta.segment(grp.offset, grp.size());
    const PrecondBlock& b = u.block(idx);
    if (auto* dblk = std::get_if<DiagBlock>(&b)) {
      (void)dblk;
      grad.segment(at, grp.size()) = (-di.array() * gi.array()).matrix();
      at += grp.size();
    } else if (auto* k = std::get_if<KFacBlock>(&b)) {
      Eigen::Map<const Matrix> x(gi.data(), grp.rows, grp.cols);
      Matrix gbar = -Eigen::Map<const Matrix>(di.data(), grp.rows, grp.cols);
      Matrix dc = gbar * k->D * x.transpose();
      Matrix dd = gbar.transpose() * k->C * x;
      grad.segment(at, dc.size()) = Eigen::Map<const Vector>(dc.data(), dc.size());
      at += static_cast<int>(dc.size());
      grad.segment(at, dd.size()) = Eigen::Map<const Vector>(dd.data(), dd.size());
      at += static_cast<int>(dd.size());
    } else if (auto* e = std::get_if<EKFacBlock>(&b)) {
      Eigen::Map<const Matrix> x(gi.data(), grp.rows, grp.cols);
      Matrix gbar = -Eigen::Map<const Matrix>(di.data(), grp.rows, grp.cols);
      Matrix xh = e->QL.transpose() * x * e->QR;              // transformed input
      Matrix yh = xh;                                          // s-scaled copy
      Eigen::Map<Vector>(yh.data(), yh.size()).array() *= e->s.array();
      Matrix ghat = e->QL.transpose() * gbar * e->QR;          // dJ/dYhat
      Vector ds = (Eigen::Map<const Vector>(ghat.data(), ghat.size()).array() *
                   Eigen::Map<const Vector>(xh.data(), xh.size()).array())
                      .matrix();
      Matrix dxh = ghat;                                       // dJ/dXhat
      Eigen::Map<Vector>(dxh.data(), dxh.size()).array() *= e->s.array();
      Matrix dql = gbar * e->QR * yh.transpose() + x * e->QR * dxh.transpose();
      Matrix dqr = gbar.transpose() * e->QL * yh + x.transpose() * e->QL * dxh;
      grad.segment(at, dql.size()) = Eigen::Map<const Vector>(dql.data(), dql.size());
      at += static_cast<int>(dql.size());
      grad.segment(at, dqr.size()) = Eigen::Map<const Vector>(dqr.data(), dqr.size());
      at += static_cast<int>(dqr.size());
      grad.segment(at, ds.size()) = ds;
      at += static_cast<int>(ds.size());
    } else {
      Matrix du = -di * gi.transpose();
      grad.segment(at, du.size()) = Eigen::Map<const Vector>(du.data(), du.size());
      at += static_cast<int>(du.size());
    }
  }
  return grad;
}

Preconditioner fit_preconditioner(const RelaxedProblem& prob, const Preconditioner& u_prev,
                                  const InnerFitConfig& cfg) {
  cfg.validate();

  // Fresh identity start every fit; warm starts are deliberately not used.
  Preconditioner u = Preconditioner::identity(u_prev.groups(), u_prev.structure());
  Vector params = u.params();
  Vector velocity = Vector::Zero(params.size());
  Vector m = Vector::Zero(params.size());
  Vector v = Vector::Zero(params.size());
  const double adam_eps = 1e-8;

  double j0 = 0.0;
  for (int t = 0; t < cfg.steps; ++t) {
    auto [j, grad] = prob.objective_and_gradient(u);
    if (t == 0) {
      j0 = j;
    } else if (j > j0 + 10.0 * std::abs(j0)) {
      throw FitDivergence("preconditioner fit diverged at inner step " + std::to_string(t) +
                              ": J went from " + std::to_string(j0) + " to " + std::to_string(j),
                          t, j0, j);
    }
    if (cfg.optimizer == InnerOpt::SGDM) {
      velocity = cfg.momentum * velocity + grad;
      params -= cfg.lr * velocity;
    } else {
      m = 0.9 * m + 0.1 * grad;
      v = 0.999 * v + 0.001 * grad.cwiseProduct(grad);
      const double bc1 = 1.0 - std::pow(0.9, t + 1);
      const double bc2 = 1.0 - std::pow(0.999, t + 1);
      params -= cfg.lr *
                ((m / bc1).array() / ((v / bc2).array().sqrt() + adam_eps)).matrix();
    }
    u.set_params(params);
  }

  // Final guard on the fitted value before the EMA combine.
  const double jt = prob.objective(u);
  if (jt > j0 + 10.0 * std::abs(j0)) {
    throw FitDivergence("preconditioner fit diverged: J went from " + std::to_string(j0) +
                            " to " + std::to_string(jt),
                        cfg.steps, j0, jt);
  }

  return ema_update(u_prev, u, cfg.ema);
}

}  // namespace llqr
