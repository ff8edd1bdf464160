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

#include "qmpc/baselines.hpp"
#include "qmpc/dynamics.hpp"
#include "qmpc/mpc.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace qmpc {

using Params = nlohmann::ordered_json;

struct ScenarioRun {
  std::string name;
  TrajectoryRecord record;
  std::vector<std::string> control_labels;
};

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct ScenarioResult {
  std::string scenario;
  std::vector<ScenarioRun> runs;
  std::vector<Table> tables;
  nlohmann::ordered_json summary;
};

struct RunOptions {
  int jobs = 1;
  std::uint64_t seed = 0;
};

struct ScenarioInfo {
  std::string name;
  std::string description;
  Params defaults;
  std::function<ScenarioResult(const Params&, const RunOptions&)> run;
};

const std::vector<ScenarioInfo>& scenario_registry();
/// Throws std::invalid_argument for unknown names.
const ScenarioInfo& find_scenario(const std::string& name);

/// Defaults, then `file` entries, then `key=value` overrides. Values are parsed
/// as JSON when possible and must match the type of the default.
Params resolve_params(const ScenarioInfo& info, const Params& file,
                      const std::vector<std::string>& overrides);

/// Checks the resolved parameters without running anything.
void validate_params(const ScenarioInfo& info, const Params& params);

// Hamiltonians.
Liouvillian qubit_liouvillian(double delta);
/// α|2⟩⟨2| with drives (a + a†)/2 and i(a − a†)/2 truncated to `levels`.
Liouvillian transmon_liouvillian(double alpha, Eigen::Index levels);
/// (ξ/2) σz⊗σz + (u_A/2) σx⊗I + (u_B/2) I⊗σy.
Liouvillian crosstalk_liouvillian(double xi);

/// MPC settings shared by the scenarios (keys dt, horizon, u_max, du_max, r,
/// q_population, feedback_period, interior_slew, full_sqp_at_feedback,
/// initial_control_guess). Q is the population weight for each listed block dim.
MPCConfig mpc_config_from(const Params& p, const std::vector<Eigen::Index>& block_dims,
                          Eigen::Index num_controls);

/// First logged time after which the infidelity stays below `threshold`.
std::optional<double> settling_time(const TrajectoryRecord& rec, double threshold);

/// Samples whose amplitude or slew exceeds the bounds by more than `tol`,
/// starting from zero control.
int constraint_violations(const TrajectoryRecord& rec, double u_max, double du_max,
                          double tol = 1e-6);

/// Applies `controls` then holds zero control until `total_steps`.
std::vector<RealVector> pad_controls(std::vector<RealVector> controls, int total_steps,
                                     Eigen::Index num_controls);

int steps_for(double duration, double dt);

/// Runs `task(i)` for i in [0, count) on up to `jobs` threads.
void parallel_for(int count, int jobs, const std::function<void(int)>& task);

ScenarioResult scenario_qubit_detuning(const Params& p, const RunOptions& opts);
ScenarioResult scenario_transmon_drag(const Params& p, const RunOptions& opts);
ScenarioResult scenario_drag_ladder(const Params& p, const RunOptions& opts);
ScenarioResult scenario_crosstalk(const Params& p, const RunOptions& opts);
ScenarioResult scenario_nm_comparison(const Params& p, const RunOptions& opts);
ScenarioResult scenario_feedback_sweep(const Params& p, const RunOptions& opts);

}  // namespace qmpc
