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

// End-to-end acceptance checks. Prints one line per criterion and exits
// nonzero when any criterion fails.

#include "qmpc/baselines.hpp"
#include "qmpc/scenarios.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>

using namespace qmpc;
using namespace qmpc::testing;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int worker_count() { return std::max(1, static_cast<int>(std::thread::hardware_concurrency())); }

ScenarioResult run_default(const std::string& name) {
  const ScenarioInfo& info = find_scenario(name);
  return info.run(resolve_params(info, nullptr, {}), RunOptions{worker_count(), 0});
}

double run_value(const ScenarioResult& r, const std::string& run, const std::string& key) {
  return r.summary.at("runs").at(run).at(key).get<double>();
}

std::optional<double> run_optional(const ScenarioResult& r, const std::string& run,
                                   const std::string& key) {
  const auto& v = r.summary.at("runs").at(run).at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

/// Amplitude and slew bounds on every run, to 1e-6.
bool runs_within_bounds(const ScenarioResult& r, double u_max, double du_max, std::ostringstream& log) {
  bool ok = true;
  for (const auto& run : r.runs) {
    if (run.record.controls.empty()) continue;
    const Eigen::Index m = run.record.controls.front().size();
    const ConstraintReport c = check_constraints(run.record.controls, RealVector::Constant(m, -u_max),
                                                 RealVector::Constant(m, u_max),
                                                 RealVector::Constant(m, du_max));
    if (c.amplitude_excess > 1e-6 || c.slew_excess > 1e-6) {
      log << " " << run.name << " exceeds bounds (" << c.amplitude_excess << ", " << c.slew_excess << ")";
      ok = false;
    }
  }
  return ok;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

void qubit_detuning(Outcome& o) {
  const ScenarioResult r = run_default("qubit_detuning");
  const double pi = run_value(r, "pi_pulse", "final_infidelity");
  const double mpc = run_value(r, "mpc", "final_infidelity");
  o.detail << "pi-pulse " << fmt(pi) << ", MPC " << fmt(mpc) << " at 12.5 ns";
  o.require(pi > 1e-1, "pi-pulse infidelity > 1e-1");
  o.require(mpc < 1e-2, "MPC infidelity < 1e-2");
  o.require(pi >= 10.0 * mpc, "arms separated by an order of magnitude");
  const Params p = find_scenario("qubit_detuning").defaults;
  o.require(runs_within_bounds(r, p.at("u_max").get<double>(), p.at("du_max").get<double>(), o.detail),
            "control bounds");
}

void drag_ladder(Outcome& o) {
  const ScenarioResult r = run_default("drag_ladder");
  const double a = run_value(r, "a_gaussian", "final_infidelity");
  const double b = run_value(r, "b_drag", "final_infidelity");
  const double c = run_value(r, "c_mpc_full_model", "final_infidelity");
  const double d = run_value(r, "d_mpc_no_anharmonicity", "final_infidelity");
  const double e = run_value(r, "e_mpc_qubit_subspace", "final_infidelity");
  o.detail << "a " << fmt(a) << ", b " << fmt(b) << ", c " << fmt(c) << ", d " << fmt(d) << ", e "
           << fmt(e);
  o.require(a > b && b > d, "a > b > d");
  o.require(c <= b, "c <= b");
  o.require(e < a, "e < a");
  const Params p = find_scenario("drag_ladder").defaults;
  o.require(runs_within_bounds(r, p.at("u_max").get<double>(), p.at("du_max").get<double>(), o.detail),
            "control bounds");
}

void crosstalk(Outcome& o) {
  const ScenarioResult r = run_default("crosstalk");
  const double pi = run_value(r, "pi_crosstalk", "final_fidelity");
  const double mpc = run_value(r, "mpc_crosstalk", "final_fidelity");
  const auto settle = run_optional(r, "mpc_crosstalk", "settling_time_ns");
  const auto settle_free = run_optional(r, "mpc_no_crosstalk", "settling_time_ns");
  o.detail << "pi F " << fmt(pi) << ", MPC F " << fmt(mpc) << ", settling "
           << (settle ? fmt(*settle) : "none") << " ns vs " << (settle_free ? fmt(*settle_free) : "none")
           << " ns without crosstalk";
  o.require(pi < 0.9, "pi-pulse joint fidelity < 0.9");
  o.require(mpc > 0.99, "MPC joint fidelity > 0.99");
  o.require(settle && *settle > 20.0, "settling > 20 ns with crosstalk");
  o.require(settle_free && *settle_free < 10.0, "settling < 10 ns without crosstalk");
  const Params p = find_scenario("crosstalk").defaults;
  o.require(runs_within_bounds(r, p.at("u_max").get<double>(), p.at("du_max").get<double>(), o.detail),
            "control bounds");
}

void nm_comparison(Outcome& o) {
  const ScenarioResult r = run_default("nm_comparison");
  const Params p = find_scenario("nm_comparison").defaults;
  int worst = 0;
  bool all = true;
  for (const auto& v : r.summary.at("mpc_first_success_iteration")) {
    if (v.is_null()) {
      all = false;
    } else {
      worst = std::max(worst, v.get<int>());
    }
  }
  o.require(all && worst <= 10, "MPC success within 10 tomography rounds for every model");
  o.require(r.summary.at("mpc_first_success_iteration").size() == 11, "11 models");

  // Replay one random simplex and count evaluations before the first
  // point that is not a simplex vertex.
  const int steps = p.at("pulse_steps").get<int>();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dist(-p.at("random_amplitude").get<double>(),
                                              p.at("random_amplitude").get<double>());
  RealVector seed(steps);
  for (int k = 0; k < steps; ++k) seed(k) = dist(rng);
  const auto vertices = coordinate_simplex(seed, p.at("du_max").get<double>());
  std::vector<RealVector> calls;
  nelder_mead_calibrate(
      [&](const RealVector& v) {
        calls.push_back(v);
        return v.squaredNorm();
      },
      vertices, steps + 5);
  int setup = 0;
  for (const auto& c : calls) {
    bool vertex = false;
    for (const auto& v : vertices) vertex = vertex || (c - v).norm() == 0.0;
    if (!vertex) break;
    ++setup;
  }
  o.require(setup == 11, "random simplex spends 11 evaluations before descending");

  double mpc_at_10 = kInfinity;
  for (const auto& t : r.tables) {
    if (t.name == "mpc_curve") mpc_at_10 = t.rows.at(10)[1];
  }
  const double nm_at_10 = r.summary.at("nm_random_mean_best_at_qst").get<double>();
  o.detail << "MPC worst first success " << worst << ", simplex setup " << setup
           << " evaluations, mean infidelity after 10: MPC " << fmt(mpc_at_10) << " vs random NM "
           << fmt(nm_at_10);
  o.require(nm_at_10 > mpc_at_10, "random NM worse than MPC after 10 evaluations");
}

void feedback_sweep(Outcome& o) {
  const ScenarioResult r = run_default("feedback_sweep");
  const Table& grid = r.tables.at(0);
  std::map<double, std::map<int, double>> cells;
  double grid_min = kInfinity;
  for (const auto& row : grid.rows) {
    cells[row[0]][static_cast<int>(row[1])] = row[2];
    grid_min = std::min(grid_min, row[2]);
  }
  o.require(cells.size() == 11 && cells.begin()->second.size() == 8, "11 x 8 grid");
  double zero_worst = 0.0;
  for (const auto& [delta, row] : cells) {
    if (std::abs(delta) > 1e-12) continue;
    for (const auto& [period, inf] : row) zero_worst = std::max(zero_worst, inf);
  }
  o.require(zero_worst <= 2.0 * grid_min, "zero-discrepancy row within 2x of the grid minimum");
  const double largest = std::max(std::abs(cells.begin()->first), std::abs(cells.rbegin()->first));
  int improving = 0;
  for (const auto& [delta, row] : cells) {
    if (std::abs(std::abs(delta) - largest) > 1e-12) continue;
    double prev = -1.0;
    for (const auto& [period, inf] : row) {
      if (prev >= 0.0 && inf < 0.8 * prev) ++improving;
      prev = inf;
    }
  }
  o.detail << "zero row worst " << fmt(zero_worst) << " vs grid min " << fmt(grid_min) << "; "
           << improving << " improving steps (>20%) along the period axis at |delta| = " << largest;
  o.require(improving == 0, "non-improving with the feedback period at the largest discrepancy");
  o.require(r.summary.at("constraint_violations").get<int>() == 0, "control bounds");
}

void properties(Outcome& o) {
  const double vec = vec_law_error(100, 11);
  const double embed = embedding_homomorphism_error(100, 13);
  const DriftReport dq = plant_drift(qubit_liouvillian(-0.2), 1000, 0.2, 0.2 * kPi, 73);
  const DriftReport dt = plant_drift(transmon_liouvillian(-0.6, 3), 1000, 0.4, 0.75, 79);
  const double drift = std::max({dq.trace, dq.hermiticity, dt.trace, dt.hermiticity});
  const double identity = fidelity_norm_identity_error(100, 17);
  const double lin = std::max({linearization_error(discretize(qubit_liouvillian(-0.2), 0.2, 1), 10, 59),
                               linearization_error(discretize(transmon_liouvillian(-0.6, 3), 0.4, 1), 5, 61),
                               linearization_error(discretize(transmon_liouvillian(-0.6, 3), 0.4, 3), 5, 67)});
  const auto [gap, solved] = box_qp_gap(50, 101);
  const double ratio = euler_halving_ratio(qubit_liouvillian(-0.2), RealVector::Constant(1, 0.2 * kPi), 5.0, 0.1);

  // Closed-loop bounds on a short detuned run and the crosstalk plant.
  const Params qp = find_scenario("qubit_detuning").defaults;
  const MPCConfig cfg = mpc_config_from(qp, {2}, 1);
  const auto ref = ReferenceTrajectory::setpoint(QuantumState::basis(2, 1).to_real(), 1, cfg.horizon);
  const TrajectoryRecord rec = run_closed_loop(qubit_liouvillian(-0.2), discretize(qubit_liouvillian(0.0), cfg.dt, 1),
                                               QuantumState::basis(2, 0), ref, cfg, 63);
  const ConstraintReport c = check_constraints(rec.controls, cfg.u_min, cfg.u_max, cfg.du_max);
  const double bounds = std::max(c.amplitude_excess, c.slew_excess);

  o.detail << "vec " << fmt(vec) << ", embed " << fmt(embed) << ", drift " << fmt(drift) << ", identity "
           << fmt(identity) << ", linearization " << fmt(lin) << ", QP gap " << fmt(gap) << ", Euler ratio "
           << fmt(ratio) << ", bound excess " << fmt(bounds);
  o.require(vec <= 1e-12, "vectorization law");
  o.require(embed <= 1e-12, "embedding homomorphism");
  o.require(drift <= 1e-10, "trace/Hermiticity drift");
  o.require(identity <= 1e-9, "norm-fidelity identity");
  o.require(lin <= 1e-6, "linearization vs finite differences");
  o.require(gap <= 1e-5 && solved, "QP vs projected gradient");
  o.require(ratio >= 1.7 && ratio <= 2.3, "Euler convergence ratio");
  o.require(bounds <= 1e-6, "constraint satisfaction");
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Outcome&)> check;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "qubit detuning", 30.0, qubit_detuning},
      {2, "DRAG ladder", 120.0, drag_ladder},
      {3, "crosstalk", 120.0, crosstalk},
      {4, "Nelder-Mead comparison", 300.0, nm_comparison},
      {5, "feedback sweep", 600.0, feedback_sweep},
      {6, "property suites", 60.0, properties},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.check(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(secs < c.budget_s, "runtime under " + fmt(c.budget_s) + " s");
    if (!o.pass) ++failures;
    std::printf("criterion %d %s: %s (%.1f s) %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", secs,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
