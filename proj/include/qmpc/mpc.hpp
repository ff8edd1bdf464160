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

#include "qmpc/dynamics.hpp"
#include "qmpc/qcore.hpp"
#include "qmpc/qpsolver.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace qmpc {

struct LineSearchSettings {
  double armijo_c1 = 1e-4;
  double shrink = 0.5;
  int max_backtracks = 20;
  /// Weight of the ℓ1 dynamics defect in the merit function.
  double merit_penalty = 1e3;
};

struct SQPSettings {
  int max_iters = 30;
  double convergence_tol = 1e-6;
  /// Constant control used for the step-0 guess. A zero guess at a
  /// population eigenstate is a stationary point of the linearized problem.
  double initial_control_guess = 0.1;
  LineSearchSettings line_search;
};

struct MPCConfig {
  int horizon = 1;
  double dt = 1.0;
  RealMatrix q;
  RealMatrix r;
  RealMatrix q_final;
  /// Empty vectors mean unbounded.
  RealVector x_min;
  RealVector x_max;
  RealVector u_min;
  RealVector u_max;
  /// Per-step slew limit |u(t) − u(t−1)|; empty means no slew rows.
  RealVector du_max;
  /// Slew rows between consecutive horizon steps; the row against the
  /// previously applied control is always present when du_max is set.
  bool interior_slew = true;
  int feedback_period = 1;
  /// Run the full SQP (instead of one α = 1 iteration) whenever fresh plant
  /// feedback arrives after step 0.
  bool full_sqp_at_feedback = false;
  /// Quadratic weight on state-bound slacks in the infeasibility fallback.
  double soft_state_penalty = 1e4;
  SQPSettings sqp;
  QPSettings qp;

  /// Throws std::invalid_argument when dimensions or invariants fail.
  void validate(Eigen::Index nx, Eigen::Index nu) const;
};

/// Diagonal weight with `weight` on the population entries Re ρ_jj of the
/// vectorized real state of a dim × dim density matrix, zero elsewhere.
RealMatrix population_weight(Eigen::Index dim, double weight = 1.0);

struct ReferenceTrajectory {
  std::vector<RealVector> x;  // T+1
  std::vector<RealVector> u;  // T

  static ReferenceTrajectory setpoint(const RealVector& x_ref, Eigen::Index nu, int horizon);
};

struct GuessTrajectory {
  std::vector<RealVector> x;  // T+1
  std::vector<RealVector> u;  // T

  /// x(t) = x0 for every t and constant controls `u_fill`.
  static GuessTrajectory initial(const RealVector& x0, Eigen::Index nu, int horizon,
                                 double u_fill = 0.0);
};

/// Drop the first entry of each sequence and duplicate the last.
GuessTrajectory shift_warm_start(const GuessTrajectory& prev);

/// Quadratic program for one horizon with decision vector
/// z = (x(1), …, x(T), u(0), …, u(T−1) [, state-bound slacks]).
struct MPCProblem {
  QPProblem qp;
  Eigen::Index nx = 0;
  Eigen::Index nu = 0;
  int horizon = 0;
  bool softened = false;

  Eigen::Index x_offset(int t) const { return static_cast<Eigen::Index>(t - 1) * nx; }
  Eigen::Index u_offset(int t) const {
    return static_cast<Eigen::Index>(horizon) * nx + static_cast<Eigen::Index>(t) * nu;
  }
  /// Pack guess trajectories (x(0) ignored) into a decision vector.
  RealVector pack(const std::vector<RealVector>& x, const std::vector<RealVector>& u) const;
  /// Unpack into T+1 states (x(0) = x0) and T controls.
  void unpack(const RealVector& z, const RealVector& x0, std::vector<RealVector>& x,
              std::vector<RealVector>& u) const;
};

struct QPBuildOptions {
  bool soften_state_bounds = false;
  /// Optional |u(t) − u_guess(t)| ≤ trust_radius rows.
  std::optional<double> trust_radius;
};

/// Dynamics enter as equality rows x(t+1) − A(t)x(t) − B(t)u(t) = c(t) with
/// x(0) = x0 folded into the right-hand side.
MPCProblem build_qp(const RealVector& x0, const LinearizedDynamics& dyn,
                    const ReferenceTrajectory& ref, const MPCConfig& cfg, const RealVector& u_prev,
                    const QPBuildOptions& opts = {});

/// Linearizes `model` about x0 with zero control; exact for linear models.
MPCProblem build_qp(const RealVector& x0, const BilinearModel& model,
                    const ReferenceTrajectory& ref, const MPCConfig& cfg,
                    const RealVector& u_prev);

/// Quadratic tracking cost of a trajectory, including the constant terms.
double trajectory_cost(const std::vector<RealVector>& x, const std::vector<RealVector>& u,
                       const ReferenceTrajectory& ref, const MPCConfig& cfg);

enum StepFlag : unsigned {
  kFlagNone = 0,
  kFlagQPMaxIter = 1U << 0,
  kFlagSoftened = 1U << 1,
  kFlagHeldControl = 1U << 2,
  kFlagNotConverged = 1U << 3,
  kFlagLineSearchFailed = 1U << 4,
  kFlagTrustShrunk = 1U << 5,
};

struct MPCStepResult {
  std::vector<RealVector> x;
  std::vector<RealVector> u;
  double objective = 0.0;
  int qp_iterations = 0;
  unsigned flags = kFlagNone;
};

/// One linear-quadratic MPC solve. Falls back to softened state bounds on an
/// infeasible QP, then to holding u_prev.
MPCStepResult solve_linear_mpc_step(const RealVector& x0, const BilinearModel& model,
                                    const ReferenceTrajectory& ref, const MPCConfig& cfg,
                                    const RealVector& u_prev);

struct SQPResult {
  std::vector<RealVector> x;
  std::vector<RealVector> u;
  int iterations = 0;
  int qp_iterations = 0;
  unsigned flags = kFlagNone;
  /// Merit value after each accepted step (first entry: initial guess).
  std::vector<double> merit;
  std::vector<double> step_sizes;
};

enum class SQPMode { Full, SingleIteration };

SQPResult sqp_solve(const RealVector& x0, const BilinearModel& model,
                    const ReferenceTrajectory& ref, const MPCConfig& cfg,
                    const GuessTrajectory& guess, const RealVector& u_prev,
                    SQPMode mode = SQPMode::Full);

using FeedbackMap = std::function<RealVector(const QuantumState&)>;

/// Concatenation of the vectorized real reduced states ρ_A = Tr_B ρ and ρ_B = Tr_A ρ.
RealVector reduced_feedback_adapter(const QuantumState& plant_state, Eigen::Index dim_a,
                                    Eigen::Index dim_b);

/// Vectorized real form of the leading `levels × levels` block of ρ (no renormalization).
RealVector subspace_feedback(const QuantumState& plant_state, Eigen::Index levels);

struct TrajectoryRecord {
  double dt = 0.0;
  Eigen::Index plant_dim = 0;
  std::vector<double> times;             // total_steps + 1
  std::vector<RealVector> states;        // plant states, vectorized real, total_steps + 1
  std::vector<RealVector> controls;      // applied, total_steps
  std::vector<double> infidelity;        // total_steps + 1
  std::vector<bool> measured;            // total_steps: feedback came from the plant
  std::vector<RealVector> feedback;      // x0 handed to the controller, total_steps
  std::vector<int> sqp_iterations;       // total_steps
  std::vector<int> qp_iterations;        // total_steps
  std::vector<unsigned> flags;           // total_steps

  std::size_t steps() const { return controls.size(); }
  QuantumState state(std::size_t k) const;
  unsigned combined_flags() const;
};

struct ClosedLoopOptions {
  /// Maps the plant state to the controller's state; defaults to the full
  /// vectorized real state.
  FeedbackMap feedback;
  /// Pure plant-level target for infidelity logging; defaults to the
  /// reference setpoint when the dimensions agree.
  std::optional<QuantumState> target;
  RealVector u_initial;
};

/// Receding-horizon loop: full SQP at step 0, then shifted warm starts with a
/// single α = 1 iteration (or full SQP at feedback instants when configured).
/// Between plant measurements the controller advances its own model.
TrajectoryRecord run_closed_loop(const Liouvillian& plant, const BilinearModel& model,
                                 const QuantumState& rho0, const ReferenceTrajectory& ref,
                                 const MPCConfig& cfg, int total_steps,
                                 const ClosedLoopOptions& opts = {});

/// Applies a fixed control sequence to the plant and logs it like a closed-loop run.
TrajectoryRecord run_open_loop(const Liouvillian& plant, const QuantumState& rho0,
                               const QuantumState& target, const std::vector<RealVector>& controls,
                               double dt);

/// Infidelity at an arbitrary time inside the record: exact propagation from the
/// last logged state at or before `time` with the control active on that step.
double infidelity_at(const TrajectoryRecord& rec, const Liouvillian& plant,
                     const QuantumState& target, double time);

/// Largest amplitude and slew violations of the applied controls (≤ 0 means satisfied).
struct ConstraintReport {
  double amplitude_excess = 0.0;
  double slew_excess = 0.0;
};
ConstraintReport check_constraints(const std::vector<RealVector>& controls,
                                   const RealVector& u_min, const RealVector& u_max,
                                   const RealVector& du_max,
                                   const std::optional<RealVector>& u_before = std::nullopt);

}  // namespace qmpc
