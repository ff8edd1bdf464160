// Copyright 2026 The qmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qmpc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace qmpc {
namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

constexpr double kStallFactor = 100.0;

void add_dense_block(Triplets& trip, Eigen::Index row, Eigen::Index col, const RealMatrix& block,
                     double scale) {
  for (Eigen::Index j = 0; j < block.cols(); ++j) {
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
      const double v = block(i, j);
      if (v != 0.0) {
        trip.emplace_back(static_cast<int>(row + i), static_cast<int>(col + j), scale * v);
      }
    }
  }
}

bool any_finite(const RealVector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) return true;
  }
  return false;
}

RealVector or_infinite(const RealVector& v, Eigen::Index n, double fill) {
  return v.size() == 0 ? RealVector::Constant(n, fill) : v;
}

double defect_l1(const BilinearModel& model, const std::vector<RealVector>& x,
                 const std::vector<RealVector>& u) {
  double total = 0.0;
  for (std::size_t t = 0; t < u.size(); ++t) {
    total += (x[t + 1] - model.step(x[t], u[t])).lpNorm<1>();
  }
  return total;
}

double merit(const BilinearModel& model, const std::vector<RealVector>& x,
             const std::vector<RealVector>& u, const ReferenceTrajectory& ref,
             const MPCConfig& cfg) {
  return trajectory_cost(x, u, ref, cfg) +
         cfg.sqp.line_search.merit_penalty * defect_l1(model, x, u);
}

double cost_directional_derivative(const std::vector<RealVector>& x,
                                   const std::vector<RealVector>& u,
                                   const std::vector<RealVector>& dx,
                                   const std::vector<RealVector>& du,
                                   const ReferenceTrajectory& ref, const MPCConfig& cfg) {
  const std::size_t horizon = u.size();
  double d = 0.0;
  for (std::size_t t = 1; t <= horizon; ++t) {
    const RealMatrix& w = t < horizon ? cfg.q : cfg.q_final;
    d += 2.0 * (x[t] - ref.x[t]).dot(w * dx[t]);
  }
  for (std::size_t t = 0; t < horizon; ++t) d += 2.0 * (u[t] - ref.u[t]).dot(cfg.r * du[t]);
  return d;
}

struct GuardedSolve {
  MPCProblem problem;
  QPSolution solution;
  unsigned flags = kFlagNone;
  bool ok = false;
};

/// Solve the horizon QP, shrinking a trust region on u and then softening
/// state bounds when the QP is infeasible.
GuardedSolve solve_guarded(const RealVector& x0, const LinearizedDynamics& lin,
                           const ReferenceTrajectory& ref, const MPCConfig& cfg,
                           const RealVector& u_prev, const GuessTrajectory* guess,
                           const std::optional<RealVector>& y_prev, bool use_trust) {
  GuardedSolve out;
  int qp_iters = 0;
  auto attempt = [&](const QPBuildOptions& opts) {
    out.problem = build_qp(x0, lin, ref, cfg, u_prev, opts);
    QPWarmStart ws;
    if (guess != nullptr) {
      RealVector z = out.problem.pack(guess->x, guess->u);
      ws.z = std::move(z);
    }
    if (y_prev && y_prev->size() == out.problem.qp.num_constraints()) ws.y = y_prev;
    out.solution = solve(out.problem.qp, cfg.qp, ws);
    qp_iters += out.solution.iterations;
    return out.solution.status != QPStatus::PrimalInfeasible;
  };

  out.ok = attempt({});
  if (!out.ok && use_trust) {
    double radius = 1.0;
    if (cfg.u_max.size() > 0 && cfg.u_min.size() > 0 && cfg.u_max.allFinite() &&
        cfg.u_min.allFinite()) {
      radius = 0.5 * (cfg.u_max - cfg.u_min).maxCoeff();
    }
    for (int k = 0; k < 5 && !out.ok; ++k) {
      radius *= 0.5;
      QPBuildOptions opts;
      opts.trust_radius = radius;
      out.ok = attempt(opts);
      out.flags |= kFlagTrustShrunk;
    }
  }
  if (!out.ok && (any_finite(cfg.x_min) || any_finite(cfg.x_max))) {
    QPBuildOptions opts;
    opts.soften_state_bounds = true;
    out.ok = attempt(opts);
    out.flags |= kFlagSoftened;
  }
  if (out.ok && out.solution.status == QPStatus::MaxIter) out.flags |= kFlagQPMaxIter;
  out.solution.iterations = qp_iters;
  return out;
}

/// Removes solver-tolerance violations of the amplitude and boundary slew bounds.
RealVector project_control(const RealVector& u, const RealVector& u_prev, const MPCConfig& cfg) {
  RealVector out = u;
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    double lo = cfg.u_min.size() > 0 ? cfg.u_min(j) : -kInfinity;
    double hi = cfg.u_max.size() > 0 ? cfg.u_max(j) : kInfinity;
    if (cfg.du_max.size() > 0) {
      lo = std::max(lo, u_prev(j) - cfg.du_max(j));
      hi = std::min(hi, u_prev(j) + cfg.du_max(j));
    }
    if (lo <= hi) out(j) = std::clamp(out(j), lo, hi);
  }
  return out;
}

std::vector<RealVector> rollout(const BilinearModel& model, const RealVector& x0,
                                const std::vector<RealVector>& u) {
  std::vector<RealVector> x{x0};
  for (const auto& ut : u) x.push_back(model.step(x.back(), ut));
  return x;
}

}  // namespace

void MPCConfig::validate(Eigen::Index nx, Eigen::Index nu) const {
  std::ostringstream msg;
  auto check_vec = [&](const RealVector& v, Eigen::Index n, const char* name) {
    if (v.size() != 0 && v.size() != n && msg.str().empty()) {
      msg << "MPCConfig: " << name << " has length " << v.size() << ", expected " << n;
    }
  };
  if (horizon < 1) msg << "MPCConfig: horizon must be >= 1";
  else if (!(dt > 0.0)) msg << "MPCConfig: dt must be positive";
  else if (feedback_period < 1) msg << "MPCConfig: feedback_period must be >= 1";
  else if (q.rows() != nx || q.cols() != nx || q_final.rows() != nx || q_final.cols() != nx)
    msg << "MPCConfig: Q and Q_f must be " << nx << "x" << nx;
  else if (r.rows() != nu || r.cols() != nu)
    msg << "MPCConfig: R must be " << nu << "x" << nu;
  check_vec(x_min, nx, "x_min");
  check_vec(x_max, nx, "x_max");
  check_vec(u_min, nu, "u_min");
  check_vec(u_max, nu, "u_max");
  check_vec(du_max, nu, "du_max");
  if (msg.str().empty()) {
    const RealVector xl = or_infinite(x_min, nx, -kInfinity);
    const RealVector xu = or_infinite(x_max, nx, kInfinity);
    const RealVector ul = or_infinite(u_min, nu, -kInfinity);
    const RealVector uu = or_infinite(u_max, nu, kInfinity);
    if ((xl.array() > xu.array()).any()) msg << "MPCConfig: x_min > x_max";
    else if ((ul.array() > uu.array()).any()) msg << "MPCConfig: u_min > u_max";
    else if (du_max.size() > 0 && (du_max.array() < 0.0).any()) msg << "MPCConfig: du_max < 0";
  }
  if (msg.str().empty()) {
    for (const RealMatrix* w : {&q, &r, &q_final}) {
      Eigen::SelfAdjointEigenSolver<RealMatrix> es(0.5 * (*w + w->transpose()),
                                                   Eigen::EigenvaluesOnly);
      if (w->size() > 0 && es.eigenvalues().minCoeff() < -1e-12) {
        msg << "MPCConfig: weight matrix is not PSD";
        break;
      }
    }
  }
  if (!msg.str().empty()) throw std::invalid_argument(msg.str());
}

RealMatrix population_weight(Eigen::Index dim, double weight) {
  const Eigen::Index n = 2 * dim * dim;
  RealMatrix q = RealMatrix::Zero(n, n);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const Eigen::Index idx = 2 * (j * dim + j);
    q(idx, idx) = weight;
  }
  return q;
}

ReferenceTrajectory ReferenceTrajectory::setpoint(const RealVector& x_ref, Eigen::Index nu,
                                                  int horizon) {
  ReferenceTrajectory ref;
  ref.x.assign(static_cast<std::size_t>(horizon + 1), x_ref);
  ref.u.assign(static_cast<std::size_t>(horizon), RealVector::Zero(nu));
  return ref;
}

GuessTrajectory GuessTrajectory::initial(const RealVector& x0, Eigen::Index nu, int horizon,
                                         double u_fill) {
  GuessTrajectory g;
  g.x.assign(static_cast<std::size_t>(horizon + 1), x0);
  g.u.assign(static_cast<std::size_t>(horizon), RealVector::Constant(nu, u_fill));
  return g;
}

GuessTrajectory shift_warm_start(const GuessTrajectory& prev) {
  auto shift = [](const std::vector<RealVector>& seq) {
    if (seq.empty()) throw std::invalid_argument("shift_warm_start: empty sequence");
    std::vector<RealVector> out(seq.begin() + 1, seq.end());
    out.push_back(seq.back());
    return out;
  };
  return GuessTrajectory{shift(prev.x), shift(prev.u)};
}

RealVector MPCProblem::pack(const std::vector<RealVector>& x,
                            const std::vector<RealVector>& u) const {
  RealVector z = RealVector::Zero(qp.num_variables());
  for (int t = 1; t <= horizon; ++t) z.segment(x_offset(t), nx) = x[static_cast<std::size_t>(t)];
  for (int t = 0; t < horizon; ++t) z.segment(u_offset(t), nu) = u[static_cast<std::size_t>(t)];
  return z;
}

void MPCProblem::unpack(const RealVector& z, const RealVector& x0, std::vector<RealVector>& x,
                        std::vector<RealVector>& u) const {
  x.assign(static_cast<std::size_t>(horizon + 1), x0);
  u.assign(static_cast<std::size_t>(horizon), RealVector());
  for (int t = 1; t <= horizon; ++t) x[static_cast<std::size_t>(t)] = z.segment(x_offset(t), nx);
  for (int t = 0; t < horizon; ++t) u[static_cast<std::size_t>(t)] = z.segment(u_offset(t), nu);
}

MPCProblem build_qp(const RealVector& x0, const LinearizedDynamics& dyn,
                    const ReferenceTrajectory& ref, const MPCConfig& cfg, const RealVector& u_prev,
                    const QPBuildOptions& opts) {
  const int horizon = cfg.horizon;
  if (dyn.horizon() != horizon || dyn.a.empty()) {
    throw std::invalid_argument("build_qp: linearization horizon does not match config");
  }
  const Eigen::Index nx = dyn.a.front().rows();
  const Eigen::Index nu = dyn.b.front().cols();
  cfg.validate(nx, nu);
  if (x0.size() != nx) throw std::invalid_argument("build_qp: x0 has wrong length");
  if (u_prev.size() != nu) throw std::invalid_argument("build_qp: u_prev has wrong length");
  if (ref.x.size() != static_cast<std::size_t>(horizon + 1) ||
      ref.u.size() != static_cast<std::size_t>(horizon)) {
    throw std::invalid_argument("build_qp: reference length does not match horizon");
  }

  MPCProblem prob;
  prob.nx = nx;
  prob.nu = nu;
  prob.horizon = horizon;

  const bool has_state_bounds = any_finite(cfg.x_min) || any_finite(cfg.x_max);
  prob.softened = opts.soften_state_bounds && has_state_bounds;
  const Eigen::Index n_core = static_cast<Eigen::Index>(horizon) * (nx + nu);
  const Eigen::Index n_slack = prob.softened ? static_cast<Eigen::Index>(horizon) * nx : 0;
  const Eigen::Index n = n_core + n_slack;

  // Cost.
  Triplets p_trip;
  RealVector q = RealVector::Zero(n);
  for (int t = 1; t <= horizon; ++t) {
    const RealMatrix& w = t < horizon ? cfg.q : cfg.q_final;
    add_dense_block(p_trip, prob.x_offset(t), prob.x_offset(t), w, 2.0);
    q.segment(prob.x_offset(t), nx) = -2.0 * (w * ref.x[static_cast<std::size_t>(t)]);
  }
  for (int t = 0; t < horizon; ++t) {
    add_dense_block(p_trip, prob.u_offset(t), prob.u_offset(t), cfg.r, 2.0);
    q.segment(prob.u_offset(t), nu) = -2.0 * (cfg.r * ref.u[static_cast<std::size_t>(t)]);
  }
  for (Eigen::Index i = 0; i < n_slack; ++i) {
    p_trip.emplace_back(static_cast<int>(n_core + i), static_cast<int>(n_core + i),
                        2.0 * cfg.soft_state_penalty);
  }

  // Constraints.
  Triplets g_trip;
  std::vector<double> lo;
  std::vector<double> hi;
  auto next_row = [&]() { return static_cast<Eigen::Index>(lo.size()); };

  for (int t = 0; t < horizon; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    const Eigen::Index row = next_row();
    for (Eigen::Index i = 0; i < nx; ++i) {
      g_trip.emplace_back(static_cast<int>(row + i), static_cast<int>(prob.x_offset(t + 1) + i), 1.0);
    }
    if (t > 0) add_dense_block(g_trip, row, prob.x_offset(t), dyn.a[ti], -1.0);
    add_dense_block(g_trip, row, prob.u_offset(t), dyn.b[ti], -1.0);
    RealVector rhs = dyn.affine_offset(t);
    if (t == 0) rhs += dyn.a[ti] * x0;
    for (Eigen::Index i = 0; i < nx; ++i) {
      lo.push_back(rhs(i));
      hi.push_back(rhs(i));
    }
  }

  if (any_finite(cfg.u_min) || any_finite(cfg.u_max)) {
    const RealVector ul = or_infinite(cfg.u_min, nu, -kInfinity);
    const RealVector uu = or_infinite(cfg.u_max, nu, kInfinity);
    for (int t = 0; t < horizon; ++t) {
      const Eigen::Index row = next_row();
      for (Eigen::Index j = 0; j < nu; ++j) {
        g_trip.emplace_back(static_cast<int>(row + j), static_cast<int>(prob.u_offset(t) + j), 1.0);
        lo.push_back(ul(j));
        hi.push_back(uu(j));
      }
    }
  }

  if (has_state_bounds) {
    const RealVector xl = or_infinite(cfg.x_min, nx, -kInfinity);
    const RealVector xu = or_infinite(cfg.x_max, nx, kInfinity);
    for (int t = 1; t <= horizon; ++t) {
      for (Eigen::Index i = 0; i < nx; ++i) {
        if (!std::isfinite(xl(i)) && !std::isfinite(xu(i))) continue;
        const int col = static_cast<int>(prob.x_offset(t) + i);
        if (!prob.softened) {
          g_trip.emplace_back(static_cast<int>(next_row()), col, 1.0);
          lo.push_back(xl(i));
          hi.push_back(xu(i));
          continue;
        }
        const int slack = static_cast<int>(n_core + prob.x_offset(t) + i);
        // x - s <= x_max, x + s >= x_min, s >= 0
        g_trip.emplace_back(static_cast<int>(next_row()), col, 1.0);
        g_trip.emplace_back(static_cast<int>(next_row()), slack, -1.0);
        lo.push_back(-kInfinity);
        hi.push_back(xu(i));
        g_trip.emplace_back(static_cast<int>(next_row()), col, 1.0);
        g_trip.emplace_back(static_cast<int>(next_row()), slack, 1.0);
        lo.push_back(xl(i));
        hi.push_back(kInfinity);
        g_trip.emplace_back(static_cast<int>(next_row()), slack, 1.0);
        lo.push_back(0.0);
        hi.push_back(kInfinity);
      }
    }
  }

  if (cfg.du_max.size() > 0) {
    for (Eigen::Index j = 0; j < nu; ++j) {
      if (!std::isfinite(cfg.du_max(j))) continue;
      g_trip.emplace_back(static_cast<int>(next_row()), static_cast<int>(prob.u_offset(0) + j), 1.0);
      lo.push_back(u_prev(j) - cfg.du_max(j));
      hi.push_back(u_prev(j) + cfg.du_max(j));
    }
    if (cfg.interior_slew) {
      for (int t = 1; t < horizon; ++t) {
        for (Eigen::Index j = 0; j < nu; ++j) {
          if (!std::isfinite(cfg.du_max(j))) continue;
          const int row = static_cast<int>(next_row());
          g_trip.emplace_back(row, static_cast<int>(prob.u_offset(t) + j), 1.0);
          g_trip.emplace_back(row, static_cast<int>(prob.u_offset(t - 1) + j), -1.0);
          lo.push_back(-cfg.du_max(j));
          hi.push_back(cfg.du_max(j));
        }
      }
    }
  }

  if (opts.trust_radius) {
    for (int t = 0; t < horizon; ++t) {
      const RealVector& ug = dyn.u_guess[static_cast<std::size_t>(t)];
      for (Eigen::Index j = 0; j < nu; ++j) {
        g_trip.emplace_back(static_cast<int>(next_row()), static_cast<int>(prob.u_offset(t) + j), 1.0);
        lo.push_back(ug(j) - *opts.trust_radius);
        hi.push_back(ug(j) + *opts.trust_radius);
      }
    }
  }

  const Eigen::Index m = next_row();
  prob.qp.p.resize(n, n);
  prob.qp.p.setFromTriplets(p_trip.begin(), p_trip.end());
  prob.qp.q = std::move(q);
  prob.qp.g.resize(m, n);
  prob.qp.g.setFromTriplets(g_trip.begin(), g_trip.end());
  prob.qp.l = Eigen::Map<const RealVector>(lo.data(), m);
  prob.qp.u = Eigen::Map<const RealVector>(hi.data(), m);
  return prob;
}

MPCProblem build_qp(const RealVector& x0, const BilinearModel& model,
                    const ReferenceTrajectory& ref, const MPCConfig& cfg,
                    const RealVector& u_prev) {
  const GuessTrajectory guess = GuessTrajectory::initial(x0, model.num_controls(), cfg.horizon);
  return build_qp(x0, linearize(model, guess.x, guess.u), ref, cfg, u_prev);
}

double trajectory_cost(const std::vector<RealVector>& x, const std::vector<RealVector>& u,
                       const ReferenceTrajectory& ref, const MPCConfig& cfg) {
  const std::size_t horizon = u.size();
  double j = 0.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    const RealVector dx = x[t] - ref.x[t];
    const RealVector du = u[t] - ref.u[t];
    j += dx.dot(cfg.q * dx) + du.dot(cfg.r * du);
  }
  const RealVector dxf = x[horizon] - ref.x[horizon];
  return j + dxf.dot(cfg.q_final * dxf);
}

MPCStepResult solve_linear_mpc_step(const RealVector& x0, const BilinearModel& model,
                                    const ReferenceTrajectory& ref, const MPCConfig& cfg,
                                    const RealVector& u_prev) {
  const GuessTrajectory guess = GuessTrajectory::initial(x0, model.num_controls(), cfg.horizon);
  const LinearizedDynamics lin = linearize(model, guess.x, guess.u);
  GuardedSolve gs = solve_guarded(x0, lin, ref, cfg, u_prev, nullptr, std::nullopt, false);
  MPCStepResult res;
  res.flags = gs.flags;
  res.qp_iterations = gs.solution.iterations;
  if (gs.ok) {
    gs.problem.unpack(gs.solution.z, x0, res.x, res.u);
  } else {
    res.u.assign(static_cast<std::size_t>(cfg.horizon), u_prev);
    res.x = rollout(model, x0, res.u);
    res.flags |= kFlagHeldControl;
  }
  res.objective = trajectory_cost(res.x, res.u, ref, cfg);
  return res;
}

SQPResult sqp_solve(const RealVector& x0, const BilinearModel& model,
                    const ReferenceTrajectory& ref, const MPCConfig& cfg,
                    const GuessTrajectory& guess, const RealVector& u_prev, SQPMode mode) {
  const auto horizon = static_cast<std::size_t>(cfg.horizon);
  if (guess.x.size() != horizon + 1 || guess.u.size() != horizon) {
    throw std::invalid_argument("sqp_solve: guess length does not match horizon");
  }
  SQPResult res;
  std::vector<RealVector> xg = guess.x;
  std::vector<RealVector> ug = guess.u;
  xg[0] = x0;
  std::optional<RealVector> y_prev;
  const auto& ls = cfg.sqp.line_search;
  double current_merit = merit(model, xg, ug, ref, cfg);
  res.merit.push_back(current_merit);
  bool converged = false;

  for (int it = 1; it <= cfg.sqp.max_iters; ++it) {
    const LinearizedDynamics lin = linearize(model, xg, ug);
    const GuessTrajectory current{xg, ug};
    GuardedSolve gs = solve_guarded(x0, lin, ref, cfg, u_prev, &current, y_prev, true);
    res.qp_iterations += gs.solution.iterations;
    res.flags |= gs.flags;
    res.iterations = it;
    if (!gs.ok) {
      res.flags |= kFlagHeldControl;
      break;
    }
    y_prev = gs.solution.y;

    std::vector<RealVector> xq;
    std::vector<RealVector> uq;
    gs.problem.unpack(gs.solution.z, x0, xq, uq);

    if (mode == SQPMode::SingleIteration) {
      xg = std::move(xq);
      ug = std::move(uq);
      res.step_sizes.push_back(1.0);
      res.merit.push_back(merit(model, xg, ug, ref, cfg));
      converged = true;
      break;
    }

    std::vector<RealVector> dx(horizon + 1);
    std::vector<RealVector> du(horizon);
    double step_norm = 0.0;
    for (std::size_t t = 0; t <= horizon; ++t) {
      dx[t] = xq[t] - xg[t];
      step_norm = std::max(step_norm, dx[t].cwiseAbs().maxCoeff());
    }
    for (std::size_t t = 0; t < horizon; ++t) {
      du[t] = uq[t] - ug[t];
      step_norm = std::max(step_norm, du[t].cwiseAbs().maxCoeff());
    }

    const double slope = std::min(
        0.0, cost_directional_derivative(xg, ug, dx, du, ref, cfg) -
                 ls.merit_penalty * defect_l1(model, xg, ug));
    double alpha = 1.0;
    bool accepted = false;
    std::vector<RealVector> xt(horizon + 1);
    std::vector<RealVector> ut(horizon);
    double trial_merit = current_merit;
    for (int bt = 0; bt <= ls.max_backtracks; ++bt) {
      for (std::size_t t = 0; t <= horizon; ++t) xt[t] = xg[t] + alpha * dx[t];
      for (std::size_t t = 0; t < horizon; ++t) ut[t] = ug[t] + alpha * du[t];
      trial_merit = merit(model, xt, ut, ref, cfg);
      if (trial_merit <= current_merit + ls.armijo_c1 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= ls.shrink;
    }
    if (!accepted) {
      // Steps this small are at the resolution of the inner QP solve.
      converged = step_norm <= kStallFactor * cfg.sqp.convergence_tol;
      res.flags |= kFlagLineSearchFailed;
      break;
    }
    xg = xt;
    ug = ut;
    current_merit = trial_merit;
    res.merit.push_back(current_merit);
    res.step_sizes.push_back(alpha);

    if (alpha * step_norm <= cfg.sqp.convergence_tol || (model.is_linear() && alpha == 1.0)) {
      converged = true;
      break;
    }
  }
  if (!converged) res.flags |= kFlagNotConverged;
  res.x = std::move(xg);
  res.u = std::move(ug);
  return res;
}

RealVector reduced_feedback_adapter(const QuantumState& plant_state, Eigen::Index dim_a,
                                    Eigen::Index dim_b) {
  if (plant_state.dim() != dim_a * dim_b) {
    std::ostringstream msg;
    msg << "reduced_feedback_adapter: plant dimension " << plant_state.dim()
        << " does not match partition (" << dim_a << ", " << dim_b << ")";
    throw std::invalid_argument(msg.str());
  }
  const RealVector xa =
      real_embed_vec(vectorize(partial_trace(plant_state.rho(), dim_a, dim_b, Subsystem::A)));
  const RealVector xb =
      real_embed_vec(vectorize(partial_trace(plant_state.rho(), dim_a, dim_b, Subsystem::B)));
  RealVector out(xa.size() + xb.size());
  out << xa, xb;
  return out;
}

RealVector subspace_feedback(const QuantumState& plant_state, Eigen::Index levels) {
  if (levels < 1 || levels > plant_state.dim()) {
    throw std::invalid_argument("subspace_feedback: level count out of range");
  }
  return real_embed_vec(vectorize(plant_state.rho().topLeftCorner(levels, levels)));
}

QuantumState TrajectoryRecord::state(std::size_t k) const {
  return QuantumState::from_real(states.at(k), plant_dim);
}

unsigned TrajectoryRecord::combined_flags() const {
  unsigned f = kFlagNone;
  for (unsigned v : flags) f |= v;
  return f;
}

TrajectoryRecord run_closed_loop(const Liouvillian& plant, const BilinearModel& model,
                                 const QuantumState& rho0, const ReferenceTrajectory& ref,
                                 const MPCConfig& cfg, int total_steps,
                                 const ClosedLoopOptions& opts) {
  const Eigen::Index nx = model.state_size();
  const Eigen::Index nu = model.num_controls();
  cfg.validate(nx, nu);
  if (plant.num_controls() != nu) {
    throw std::invalid_argument("run_closed_loop: plant and model control counts differ");
  }
  if (rho0.dim() != plant.dim()) throw std::invalid_argument("run_closed_loop: rho0 dimension");
  if (total_steps < 0) throw std::invalid_argument("run_closed_loop: negative step count");

  const FeedbackMap feedback =
      opts.feedback ? opts.feedback : FeedbackMap([](const QuantumState& s) { return s.to_real(); });
  QuantumState target = [&]() {
    if (opts.target) return *opts.target;
    if (ref.x.front().size() != plant.state_size()) {
      throw std::invalid_argument("run_closed_loop: target required when model and plant differ");
    }
    return QuantumState::from_real(ref.x.front(), plant.dim());
  }();
  if (target.dim() != plant.dim()) throw std::invalid_argument("run_closed_loop: target dimension");

  TrajectoryRecord rec;
  rec.dt = cfg.dt;
  rec.plant_dim = plant.dim();
  rec.times.push_back(0.0);
  rec.states.push_back(rho0.to_real());
  rec.infidelity.push_back(1.0 - fidelity(rho0, target));

  QuantumState plant_state = rho0;
  RealVector u_prev = opts.u_initial.size() == nu ? opts.u_initial : RealVector::Zero(nu);
  RealVector x0_prev;
  GuessTrajectory plan;

  for (int k = 0; k < total_steps; ++k) {
    const bool measured = k % cfg.feedback_period == 0;
    const RealVector x0 = measured ? feedback(plant_state) : model.step(x0_prev, u_prev);
    if (x0.size() != nx) throw std::invalid_argument("run_closed_loop: feedback state size");

    SQPResult res;
    if (k == 0) {
      res = sqp_solve(x0, model, ref, cfg,
                      GuessTrajectory::initial(x0, nu, cfg.horizon, cfg.sqp.initial_control_guess),
                      u_prev, SQPMode::Full);
    } else {
      const SQPMode mode =
          (cfg.full_sqp_at_feedback && measured) ? SQPMode::Full : SQPMode::SingleIteration;
      res = sqp_solve(x0, model, ref, cfg, shift_warm_start(plan), u_prev, mode);
    }
    const RealVector u_apply =
        (res.flags & kFlagHeldControl) ? u_prev : project_control(res.u.front(), u_prev, cfg);
    plan = GuessTrajectory{res.x, res.u};

    plant_state = step_truth(plant, plant_state, u_apply, cfg.dt);

    rec.times.push_back(static_cast<double>(k + 1) * cfg.dt);
    rec.states.push_back(plant_state.to_real());
    rec.controls.push_back(u_apply);
    rec.infidelity.push_back(1.0 - fidelity(plant_state, target));
    rec.measured.push_back(measured);
    rec.feedback.push_back(x0);
    rec.sqp_iterations.push_back(res.iterations);
    rec.qp_iterations.push_back(res.qp_iterations);
    rec.flags.push_back(res.flags);

    u_prev = u_apply;
    x0_prev = x0;
  }
  return rec;
}

TrajectoryRecord run_open_loop(const Liouvillian& plant, const QuantumState& rho0,
                               const QuantumState& target, const std::vector<RealVector>& controls,
                               double dt) {
  TrajectoryRecord rec;
  rec.dt = dt;
  rec.plant_dim = plant.dim();
  rec.times.push_back(0.0);
  rec.states.push_back(rho0.to_real());
  rec.infidelity.push_back(1.0 - fidelity(rho0, target));
  QuantumState s = rho0;
  for (std::size_t k = 0; k < controls.size(); ++k) {
    s = step_truth(plant, s, controls[k], dt);
    rec.times.push_back(static_cast<double>(k + 1) * dt);
    rec.states.push_back(s.to_real());
    rec.controls.push_back(controls[k]);
    rec.infidelity.push_back(1.0 - fidelity(s, target));
    rec.measured.push_back(false);
    rec.feedback.push_back(RealVector());
    rec.sqp_iterations.push_back(0);
    rec.qp_iterations.push_back(0);
    rec.flags.push_back(kFlagNone);
  }
  return rec;
}

double infidelity_at(const TrajectoryRecord& rec, const Liouvillian& plant,
                     const QuantumState& target, double time) {
  const double steps = time / rec.dt;
  auto k = static_cast<std::size_t>(std::floor(steps + 1e-9));
  if (time < 0.0 || k > rec.steps()) {
    throw std::out_of_range("infidelity_at: time outside the recorded window");
  }
  const double remainder = time - static_cast<double>(k) * rec.dt;
  if (remainder <= 1e-9 * rec.dt || k == rec.steps()) {
    if (k == rec.steps() && remainder > 1e-9 * rec.dt) {
      throw std::out_of_range("infidelity_at: time outside the recorded window");
    }
    return 1.0 - fidelity(rec.state(k), target);
  }
  const QuantumState s = step_truth(plant, rec.state(k), rec.controls[k], remainder);
  return 1.0 - fidelity(s, target);
}

ConstraintReport check_constraints(const std::vector<RealVector>& controls,
                                   const RealVector& u_min, const RealVector& u_max,
                                   const RealVector& du_max,
                                   const std::optional<RealVector>& u_before) {
  ConstraintReport rep{-kInfinity, -kInfinity};
  std::optional<RealVector> prev = u_before;
  if (!prev && !controls.empty()) prev = RealVector::Zero(controls.front().size());
  for (const auto& u : controls) {
    if (u_max.size() > 0) rep.amplitude_excess = std::max(rep.amplitude_excess, (u - u_max).maxCoeff());
    if (u_min.size() > 0) rep.amplitude_excess = std::max(rep.amplitude_excess, (u_min - u).maxCoeff());
    if (du_max.size() > 0) {
      rep.slew_excess = std::max(rep.slew_excess, ((u - *prev).cwiseAbs() - du_max).maxCoeff());
    }
    prev = u;
  }
  return rep;
}

}  // namespace qmpc
