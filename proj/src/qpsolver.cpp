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

#include "qmpc/qpsolver.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace qmpc {
namespace {

double inf_norm(const RealVector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

RealVector project(const RealVector& v, const RealVector& l, const RealVector& u) {
  return v.cwiseMax(l).cwiseMin(u);
}

bool is_equality(double l, double u) { return l == u; }

SparseMatrix assemble_kkt(const QPProblem& qp, double sigma, const RealVector& rho) {
  const Eigen::Index n = qp.num_variables();
  const Eigen::Index m = qp.num_constraints();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(qp.p.nonZeros() + 2 * qp.g.nonZeros() + n + m));
  for (int k = 0; k < qp.p.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(qp.p, k); it; ++it) {
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) trip.emplace_back(i, i, sigma);
  for (int k = 0; k < qp.g.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(qp.g, k); it; ++it) {
      trip.emplace_back(static_cast<int>(n + it.row()), static_cast<int>(it.col()), it.value());
      trip.emplace_back(static_cast<int>(it.col()), static_cast<int>(n + it.row()), it.value());
    }
  }
  for (Eigen::Index i = 0; i < m; ++i) trip.emplace_back(n + i, n + i, -1.0 / rho(i));
  SparseMatrix kkt(n + m, n + m);
  kkt.setFromTriplets(trip.begin(), trip.end());
  return kkt;
}

RealVector row_penalties(const QPProblem& qp, double rho, double eq_scale) {
  RealVector r(qp.num_constraints());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (std::isinf(qp.l(i)) && std::isinf(qp.u(i))) {
      r(i) = 1e-6;
    } else if (is_equality(qp.l(i), qp.u(i))) {
      r(i) = rho * eq_scale;
    } else {
      r(i) = rho;
    }
  }
  return r;
}

void update_kkt_diagonal(SparseMatrix& kkt, Eigen::Index n, const RealVector& rho) {
  for (Eigen::Index i = 0; i < rho.size(); ++i) kkt.coeffRef(n + i, n + i) = -1.0 / rho(i);
}

bool primal_infeasible(const QPProblem& qp, const RealVector& dy, double eps) {
  const double norm = inf_norm(dy);
  if (norm < 1e-12) return false;
  if (inf_norm(qp.g.transpose() * dy) > eps * norm) return false;
  double support = 0.0;
  for (Eigen::Index i = 0; i < dy.size(); ++i) {
    if (dy(i) > eps * norm) {
      if (std::isinf(qp.u(i))) return false;
      support += qp.u(i) * dy(i);
    } else if (dy(i) < -eps * norm) {
      if (std::isinf(qp.l(i))) return false;
      support += qp.l(i) * dy(i);
    }
  }
  return support < -eps * norm;
}

struct Polished {
  RealVector x;
  RealVector y;
};

double primal_violation(const QPProblem& qp, const RealVector& x) {
  const RealVector gx = qp.g * x;
  return inf_norm(gx - project(gx, qp.l, qp.u));
}

double stationarity(const QPProblem& qp, const RealVector& x, const RealVector& y) {
  return inf_norm(qp.p * x + qp.q + qp.g.transpose() * y);
}

/// Guess the active set from the ADMM iterate, solve the equality-constrained
/// KKT system on it with iterative refinement, and keep the result only when
/// its multipliers have the right signs.
std::optional<Polished> polish(const QPProblem& qp, const RealVector& z, const RealVector& y,
                               double delta, int refine_iters) {
  const Eigen::Index n = qp.num_variables();
  const Eigen::Index m = qp.num_constraints();
  std::vector<Eigen::Index> rows;
  std::vector<int> side;  // -1 lower, +1 upper, 0 equality
  std::vector<double> bound;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (is_equality(qp.l(i), qp.u(i))) {
      rows.push_back(i);
      side.push_back(0);
      bound.push_back(qp.l(i));
    } else if (!std::isinf(qp.l(i)) && z(i) - qp.l(i) < -y(i)) {
      rows.push_back(i);
      side.push_back(-1);
      bound.push_back(qp.l(i));
    } else if (!std::isinf(qp.u(i)) && qp.u(i) - z(i) < y(i)) {
      rows.push_back(i);
      side.push_back(1);
      bound.push_back(qp.u(i));
    }
  }
  const auto k = static_cast<Eigen::Index>(rows.size());
  std::vector<Eigen::Index> slot(static_cast<std::size_t>(m), -1);
  for (Eigen::Index r = 0; r < k; ++r) slot[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])] = r;

  std::vector<Eigen::Triplet<double>> exact;
  for (int c = 0; c < qp.p.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(qp.p, c); it; ++it) {
      exact.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    }
  }
  for (int c = 0; c < qp.g.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(qp.g, c); it; ++it) {
      const Eigen::Index r = slot[static_cast<std::size_t>(it.row())];
      if (r < 0) continue;
      exact.emplace_back(static_cast<int>(n + r), static_cast<int>(it.col()), it.value());
      exact.emplace_back(static_cast<int>(it.col()), static_cast<int>(n + r), it.value());
    }
  }
  SparseMatrix k0(n + k, n + k);
  k0.setFromTriplets(exact.begin(), exact.end());
  std::vector<Eigen::Triplet<double>> reg = exact;
  for (Eigen::Index i = 0; i < n; ++i) reg.emplace_back(i, i, delta);
  for (Eigen::Index r = 0; r < k; ++r) reg.emplace_back(n + r, n + r, -delta);
  SparseMatrix kd(n + k, n + k);
  kd.setFromTriplets(reg.begin(), reg.end());
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(kd);
  if (ldlt.info() != Eigen::Success) return std::nullopt;

  RealVector rhs(n + k);
  rhs.head(n) = -qp.q;
  for (Eigen::Index r = 0; r < k; ++r) rhs(n + r) = bound[static_cast<std::size_t>(r)];
  RealVector t = ldlt.solve(rhs);
  for (int it = 0; it < refine_iters; ++it) t += ldlt.solve(rhs - k0 * t);
  if (!t.allFinite()) return std::nullopt;

  Polished out{t.head(n), RealVector::Zero(m)};
  for (Eigen::Index r = 0; r < k; ++r) {
    const double v = t(n + r);
    const int s = side[static_cast<std::size_t>(r)];
    if ((s == -1 && v > 0.0) || (s == 1 && v < 0.0)) return std::nullopt;
    out.y(rows[static_cast<std::size_t>(r)]) = v;
  }
  return out;
}

}  // namespace

double QPProblem::objective(const RealVector& z) const { return 0.5 * z.dot(p * z) + q.dot(z); }

void QPProblem::validate() const {
  const Eigen::Index n = q.size();
  const Eigen::Index m = l.size();
  std::ostringstream msg;
  if (p.rows() != n || p.cols() != n) {
    msg << "QPProblem: P is " << p.rows() << "x" << p.cols() << " but q has length " << n;
  } else if (g.cols() != n || g.rows() != m || u.size() != m) {
    msg << "QPProblem: constraint dimensions inconsistent (G " << g.rows() << "x" << g.cols()
        << ", l " << m << ", u " << u.size() << ")";
  } else if (n > 0 && RealMatrix(p - SparseMatrix(p.transpose())).cwiseAbs().maxCoeff() > 1e-12) {
    msg << "QPProblem: P is not symmetric";
  } else {
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!(l(i) <= u(i))) {
        msg << "QPProblem: bound order violated on row " << i << " (" << l(i) << " > " << u(i)
            << ")";
        break;
      }
    }
  }
  if (!msg.str().empty()) throw std::invalid_argument(msg.str());
}

std::string_view to_string(QPStatus s) {
  switch (s) {
    case QPStatus::Solved:
      return "solved";
    case QPStatus::MaxIter:
      return "max_iter";
    case QPStatus::PrimalInfeasible:
      return "infeasible";
  }
  return "unknown";
}

QPSolution solve(const QPProblem& qp, const QPSettings& settings, const QPWarmStart& warm) {
  qp.validate();
  const Eigen::Index n = qp.num_variables();
  const Eigen::Index m = qp.num_constraints();

  RealVector rho = row_penalties(qp, settings.rho, settings.equality_rho_scale);
  double rho_scalar = settings.rho;
  SparseMatrix kkt = assemble_kkt(qp, settings.sigma, rho);
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  ldlt.analyzePattern(kkt);
  ldlt.factorize(kkt);
  if (ldlt.info() != Eigen::Success) throw std::runtime_error("qp solve: KKT factorization failed");

  QPSolution sol;
  sol.factorizations = 1;
  RealVector x = warm.z.value_or(RealVector::Zero(n));
  RealVector y = warm.y.value_or(RealVector::Zero(m));
  if (x.size() != n || y.size() != m) throw std::invalid_argument("qp solve: warm start size mismatch");
  RealVector z = project(qp.g * x, qp.l, qp.u);

  RealVector rhs(n + m);
  RealVector y_prev = y;
  double best_score = kInfinity;
  RealVector best_x = x;
  RealVector best_y = y;
  double best_prim = kInfinity;
  double best_dual = kInfinity;
  const double alpha = settings.relaxation;

  for (int iter = 1; iter <= settings.max_iter; ++iter) {
    y_prev = y;
    rhs.head(n) = settings.sigma * x - qp.q;
    rhs.tail(m) = z - y.cwiseQuotient(rho);
    const RealVector sol_kkt = ldlt.solve(rhs);
    const RealVector x_tilde = sol_kkt.head(n);
    const RealVector z_tilde = z + (sol_kkt.tail(m) - y).cwiseQuotient(rho);

    x = alpha * x_tilde + (1.0 - alpha) * x;
    const RealVector z_relaxed = alpha * z_tilde + (1.0 - alpha) * z;
    const RealVector z_next = project(z_relaxed + y.cwiseQuotient(rho), qp.l, qp.u);
    y += rho.cwiseProduct(z_relaxed - z_next);
    z = z_next;
    sol.iterations = iter;

    const bool check = iter % settings.check_interval == 0 || iter == settings.max_iter;
    const bool adapt =
        settings.adaptive_rho_interval > 0 && iter % settings.adaptive_rho_interval == 0;
    if (!check && !adapt) continue;

    const RealVector gx = qp.g * x;
    const RealVector px = qp.p * x;
    const RealVector gty = qp.g.transpose() * y;
    const double prim = inf_norm(gx - z);
    const double dual = inf_norm(px + qp.q + gty);
    const double prim_scale = std::max(inf_norm(gx), inf_norm(z));
    const double dual_scale = std::max({inf_norm(px), inf_norm(gty), inf_norm(qp.q)});
    const double eps_prim = settings.eps_abs + settings.eps_rel * prim_scale;
    const double eps_dual = settings.eps_abs + settings.eps_rel * dual_scale;

    const double score = std::max(prim / eps_prim, dual / eps_dual);
    if (score < best_score) {
      best_score = score;
      best_x = x;
      best_y = y;
      best_prim = prim;
      best_dual = dual;
    }
    if (prim <= eps_prim && dual <= eps_dual) {
      sol.status = QPStatus::Solved;
      break;
    }
    if (check && primal_infeasible(qp, y - y_prev, settings.eps_primal_infeasible)) {
      sol.status = QPStatus::PrimalInfeasible;
      break;
    }
    if (adapt) {
      const double num = prim / std::max(prim_scale, 1e-12);
      const double den = dual / std::max(dual_scale, 1e-12);
      if (den > 0.0 && num > 0.0) {
        const double proposed = std::clamp(rho_scalar * std::sqrt(num / den), 1e-6, 1e6);
        if (proposed > rho_scalar * settings.adaptive_rho_tolerance ||
            proposed < rho_scalar / settings.adaptive_rho_tolerance) {
          rho_scalar = proposed;
          rho = row_penalties(qp, rho_scalar, settings.equality_rho_scale);
          update_kkt_diagonal(kkt, n, rho);
          ldlt.factorize(kkt);
          ++sol.factorizations;
          if (ldlt.info() != Eigen::Success) {
            throw std::runtime_error("qp solve: KKT refactorization failed");
          }
        }
      }
    }
  }

  if (sol.status == QPStatus::Solved || sol.status == QPStatus::PrimalInfeasible) {
    sol.z = x;
    sol.y = y;
    sol.primal_residual = primal_violation(qp, x);
    sol.dual_residual = stationarity(qp, x, y);
    if (sol.status == QPStatus::Solved && settings.polish) {
      if (auto p = polish(qp, z, y, settings.polish_delta, settings.polish_refine_iters)) {
        const double prim = primal_violation(qp, p->x);
        const double dual = stationarity(qp, p->x, p->y);
        if (prim <= sol.primal_residual + 1e-10 && dual <= sol.dual_residual + 1e-10) {
          sol.z = std::move(p->x);
          sol.y = std::move(p->y);
          sol.primal_residual = prim;
          sol.dual_residual = dual;
          sol.polished = true;
        }
      }
    }
  } else {
    sol.z = best_x;
    sol.y = best_y;
    sol.primal_residual = best_prim;
    sol.dual_residual = best_dual;
  }
  sol.objective = qp.objective(sol.z);
  return sol;
}

KKTReport kkt_check(const QPProblem& qp, const RealVector& z, const RealVector& y) {
  if (z.size() != qp.num_variables() || y.size() != qp.num_constraints()) {
    throw std::invalid_argument("kkt_check: dimension mismatch");
  }
  KKTReport r;
  const RealVector gz = qp.g * z;
  r.stationarity = inf_norm(qp.p * z + qp.q + qp.g.transpose() * y);
  r.primal = inf_norm(gz - project(gz, qp.l, qp.u));
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double slack = 0.0;
    if (y(i) > 0.0) {
      slack = std::isinf(qp.u(i)) ? kInfinity : std::abs(qp.u(i) - gz(i));
    } else if (y(i) < 0.0) {
      slack = std::isinf(qp.l(i)) ? kInfinity : std::abs(gz(i) - qp.l(i));
    }
    if (y(i) != 0.0) r.complementarity = std::max(r.complementarity, std::abs(y(i)) * slack);
  }
  return r;
}

KKTReport kkt_check(const QPProblem& qp, const RealVector& z, double active_tol) {
  if (z.size() != qp.num_variables()) throw std::invalid_argument("kkt_check: dimension mismatch");
  const RealVector gz = qp.g * z;
  const Eigen::Index m = qp.num_constraints();
  // Sign pattern allowed for each multiplier: -1 lower active, +1 upper active,
  // 2 free (equality), 0 inactive.
  std::vector<int> allowed(static_cast<std::size_t>(m), 0);
  for (Eigen::Index i = 0; i < m; ++i) {
    const bool at_lower = !std::isinf(qp.l(i)) && std::abs(gz(i) - qp.l(i)) <= active_tol * (1.0 + std::abs(qp.l(i)));
    const bool at_upper = !std::isinf(qp.u(i)) && std::abs(gz(i) - qp.u(i)) <= active_tol * (1.0 + std::abs(qp.u(i)));
    if (at_lower && at_upper) {
      allowed[static_cast<std::size_t>(i)] = 2;
    } else if (at_lower) {
      allowed[static_cast<std::size_t>(i)] = -1;
    } else if (at_upper) {
      allowed[static_cast<std::size_t>(i)] = 1;
    }
  }
  const SparseMatrix gt = qp.g.transpose();
  RealVector y = RealVector::Zero(m);
  RealVector resid = qp.p * z + qp.q;
  for (int sweep = 0; sweep < 2000; ++sweep) {
    double largest_change = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const int sign = allowed[static_cast<std::size_t>(i)];
      if (sign == 0) continue;
      const RealVector col = gt.col(i);
      const double nrm2 = col.squaredNorm();
      if (nrm2 == 0.0) continue;
      double yi = y(i) - col.dot(resid) / nrm2;
      if (sign == 1) yi = std::max(yi, 0.0);
      if (sign == -1) yi = std::min(yi, 0.0);
      const double delta = yi - y(i);
      if (delta != 0.0) {
        resid += delta * col;
        y(i) = yi;
        largest_change = std::max(largest_change, std::abs(delta));
      }
    }
    if (largest_change < 1e-14) break;
  }
  return kkt_check(qp, z, y);
}

}  // namespace qmpc
