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
#include "qmpc/mpc.hpp"
#include "qmpc/qcore.hpp"

#include <functional>
#include <numbers>
#include <utility>
#include <vector>

namespace qmpc {

enum class PulseKind { ConstantAreaPi, Gaussian, GaussianDerivative };

/// Envelope description sampled on a uniform grid of step dt.
///
/// ConstantAreaPi: trapezoid whose ramps rise by `ramp` per sample and whose
/// plateau is solved so that Σ u·dt = area, capped at `amplitude_cap`.
/// Gaussian: centered at duration/2 with width sigma (0 selects duration/6),
/// baseline-subtracted so it starts and ends at zero, sampled at step
/// midpoints and normalized to Σ u·dt = area.
/// GaussianDerivative: analytic time derivative of the Gaussian above.
struct PulseShape {
  PulseKind kind = PulseKind::ConstantAreaPi;
  double duration = 0.0;
  double area = std::numbers::pi;
  double sigma = 0.0;
  double ramp = kInfinity;
  double amplitude_cap = kInfinity;

  double effective_sigma() const { return sigma > 0.0 ? sigma : duration / 6.0; }
  /// One sample per step; the duration must be a whole number of steps.
  RealVector sample(double dt) const;
};

/// Trapezoidal area-π pulse u_k = min(a, (k+1)·du_max, (n−k)·du_max).
/// Throws std::invalid_argument naming the binding constraint when π is not
/// reachable under the bounds.
RealVector area_pi_pulse(double duration, double dt, double u_max, double du_max);

/// Smallest whole-step duration for which area_pi_pulse is feasible.
double shortest_area_pi_duration(double dt, double u_max, double du_max);

/// (u_x, u_y) with u_x a Gaussian π-pulse and u_y = scale·u̇_x/α.
std::pair<RealVector, RealVector> drag_pulses(double duration, double dt, double alpha,
                                              double scale, double sigma = 0.0);

struct ClipReport {
  int amplitude_clipped = 0;
  int slew_clipped = 0;
  double max_amplitude_excess = 0.0;
  double max_slew_excess = 0.0;

  bool clipped() const { return amplitude_clipped + slew_clipped > 0; }
};

/// Clamp |u| ≤ u_max, then limit |u(k) − u(k−1)| ≤ du_max in a forward pass
/// starting from `u_before`. Every modified sample is counted.
RealVector clip_pulse(const RealVector& u, double u_max, double du_max, ClipReport& report,
                      double u_before = 0.0);

/// Interleave per-channel samples into one control vector per step.
std::vector<RealVector> to_control_sequence(const std::vector<RealVector>& channels);

struct NelderMeadCoefficients {
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
};

struct SimplexState {
  std::vector<RealVector> vertices;
  std::vector<double> values;
  NelderMeadCoefficients coefficients;

  Eigen::Index num_params() const { return vertices.empty() ? 0 : vertices.front().size(); }
  /// Throws std::invalid_argument unless there are n+1 vertices of equal
  /// length and all values are finite.
  void validate() const;
};

/// Seed simplex: the seed plus copies with one coordinate raised by `step`.
std::vector<RealVector> coordinate_simplex(const RealVector& seed, double step);

struct NelderMeadResult {
  RealVector best;
  double best_value = kInfinity;
  /// Every objective evaluation in call order.
  std::vector<double> history;
  /// Best value seen after each evaluation.
  std::vector<double> best_history;
  int iterations = 0;
  SimplexState final_simplex;
};

using Objective = std::function<double(const RealVector&)>;

/// Standard Nelder-Mead; stops once `max_evaluations` objective calls have
/// been made (the initial vertices count toward the budget).
NelderMeadResult nelder_mead_calibrate(const Objective& objective,
                                       const std::vector<RealVector>& initial_vertices,
                                       int max_evaluations,
                                       const NelderMeadCoefficients& coefficients = {});

/// One full SQP solve over the configured horizon from x0 without feedback.
/// A zero horizon returns an empty sequence.
std::vector<RealVector> open_loop_optimal_pulse(const RealVector& x0, const BilinearModel& model,
                                                const ReferenceTrajectory& ref,
                                                const MPCConfig& cfg);

}  // namespace qmpc
