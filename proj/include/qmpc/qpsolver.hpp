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

#pragma once

#include "qmpc/qcore.hpp"

#include <Eigen/Sparse>

#include <limits>
#include <optional>
#include <string_view>

namespace qmpc {

using SparseMatrix = Eigen::SparseMatrix<double>;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// minimize ½ zᵀPz + qᵀz  subject to  l ≤ Gz ≤ u.
/// Equality rows are encoded with l = u; unbounded sides use ±infinity.
struct QPProblem {
  SparseMatrix p;  // symmetric PSD, n × n, both triangles stored
  RealVector q;
  SparseMatrix g;  // m × n
  RealVector l;
  RealVector u;

  Eigen::Index num_variables() const { return q.size(); }
  Eigen::Index num_constraints() const { return l.size(); }
  double objective(const RealVector& z) const;
  /// Throws std::invalid_argument when dimensions, symmetry, or bound order fail.
  void validate() const;
};

enum class QPStatus { Solved, MaxIter, PrimalInfeasible };

std::string_view to_string(QPStatus s);

struct QPSettings {
  double rho = 0.1;
  double equality_rho_scale = 1e3;
  double sigma = 1e-6;
  double relaxation = 1.6;
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  double eps_primal_infeasible = 1e-5;
  int max_iter = 4000;
  int check_interval = 5;
  /// Rescale rho from the residual balance every this many iterations
  /// (0 disables). Each rescale refactors numerically on the fixed pattern.
  int adaptive_rho_interval = 50;
  double adaptive_rho_tolerance = 5.0;
  /// Re-solve the KKT system on the detected active set after convergence.
  bool polish = true;
  double polish_delta = 1e-9;
  int polish_refine_iters = 5;
};

struct QPSolution {
  RealVector z;
  RealVector y;  // constraint multipliers
  QPStatus status = QPStatus::MaxIter;
  int iterations = 0;
  int factorizations = 0;
  double primal_residual = kInfinity;
  double dual_residual = kInfinity;
  double objective = kInfinity;
  bool polished = false;
};

struct QPWarmStart {
  std::optional<RealVector> z;
  std::optional<RealVector> y;
};

QPSolution solve(const QPProblem& qp, const QPSettings& settings = {},
                 const QPWarmStart& warm = {});

struct KKTReport {
  double stationarity = 0.0;    // ‖Pz + q + Gᵀy‖∞
  double primal = 0.0;          // ‖Gz − Π[l,u](Gz)‖∞
  double complementarity = 0.0; // max_i |y_i| · slack to the bound its sign selects
};

KKTReport kkt_check(const QPProblem& qp, const RealVector& z, const RealVector& y);

/// Multipliers estimated by sign-constrained least squares on the near-active
/// set; reports the smallest stationarity residual compatible with z.
KKTReport kkt_check(const QPProblem& qp, const RealVector& z, double active_tol = 1e-6);

}  // namespace qmpc
