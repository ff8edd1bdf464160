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

#include "qmpc/scenarios.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace qmpc {
namespace {

constexpr double kPi = std::numbers::pi;

double num(const Params& p, const char* key) { return p.at(key).get<double>(); }
int integer(const Params& p, const char* key) { return p.at(key).get<int>(); }
bool flag(const Params& p, const char* key) { return p.at(key).get<bool>(); }

/// Factor converting a detuning in the configured unit to rad/ns.
double delta_unit_scale(const Params& p) {
  const auto unit = p.at("delta_unit").get<std::string>();
  if (unit == "rad/ns") return 1.0;
  if (unit == "GHz") return 2.0 * kPi;
  throw std::invalid_argument("delta_unit must be \"rad/ns\" or \"GHz\"");
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    v[static_cast<std::size_t>(i)] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  }
  return v;
}

nlohmann::ordered_json optional_time(const std::optional<double>& t) {
  return t ? nlohmann::ordered_json(*t) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json run_summary(const TrajectoryRecord& rec, double final_infidelity,
                                   double threshold, double u_max, double du_max) {
  nlohmann::ordered_json s;
  s["final_infidelity"] = final_infidelity;
  s["final_fidelity"] = 1.0 - final_infidelity;
  s["settling_time_ns"] = optional_time(settling_time(rec, threshold));
  s["constraint_violations"] = constraint_violations(rec, u_max, du_max);
  s["step_flags"] = rec.combined_flags();
  return s;
}

Params qubit_defaults() {
  return Params{{"delta_plant", -0.2},
                {"delta_model", 0.0},
                {"dt", 0.2},
                {"horizon", 50},
                {"feedback_period", 7},
                {"u_max", 0.2 * kPi},
                {"du_max", 0.08 * kPi},
                {"r", 1e-2},
                {"q_population", 1.0},
                {"interior_slew", true},
                {"full_sqp_at_feedback", true},
                {"initial_control_guess", 0.1},
                {"model_order", 1},
                {"duration", 12.5},
                {"eval_time", 12.5},
                {"pi_pulse_duration", 0.0},
                {"success_threshold", 1e-2}};
}

Params transmon_defaults() {
  return Params{{"alpha", -0.6},
                {"dt", 0.4},
                {"horizon", 10},
                {"feedback_period", 1},
                {"u_max", 0.75},
                {"du_max", 0.2},
                {"r", 1e-2},
                {"q_population", 1.0},
                {"interior_slew", true},
                {"full_sqp_at_feedback", true},
                {"initial_control_guess", 0.1},
                {"model_order", 3},
                {"duration", 10.0},
                {"drag_scale", 0.6},
                {"gaussian_sigma", 0.0},
                {"success_threshold", 1e-2}};
}

Params ladder_defaults() {
  Params p = transmon_defaults();
  p["scale_scan_points"] = 21;
  return p;
}

Params crosstalk_defaults() {
  return Params{{"xi", 0.5},
                {"dt", 0.6},
                {"horizon", 10},
                {"feedback_period", 1},
                {"u_max", 0.2 * kPi},
                {"du_max", 0.08 * kPi},
                {"r", 1e-2},
                {"q_population", 1.0},
                {"interior_slew", true},
                {"full_sqp_at_feedback", true},
                {"initial_control_guess", 0.1},
                {"model_order", 1},
                {"duration", 25.0},
                {"pi_pulse_duration", 0.0},
                {"success_threshold", 1e-2}};
}

Params nm_defaults() {
  return Params{{"delta_true", 0.0},
                {"delta_min", -0.36},
                {"delta_max", 0.36},
                {"delta_unit", "rad/ns"},
                {"num_models", 11},
                {"dt", 1.0},
                {"pulse_steps", 10},
                {"horizon", 5},
                {"feedback_period", 1},
                {"u_max", 0.2 * kPi},
                {"du_max", 0.1 * kPi},
                {"r", 1e-2},
                {"q_population", 1.0},
                {"interior_slew", true},
                {"full_sqp_at_feedback", false},
                {"initial_control_guess", 0.1},
                {"model_order", 1},
                {"max_evaluations", 60},
                {"num_random", 10},
                {"random_amplitude", 0.2 * kPi},
                {"success_threshold", 1e-2}};
}

Params sweep_defaults() {
  return Params{{"delta_model", 0.0},
                {"delta_min", -0.5},
                {"delta_max", 0.5},
                {"delta_unit", "rad/ns"},
                {"num_deltas", 11},
                {"periods", {1, 2, 3, 4, 5, 6, 7, 8}},
                {"dt", 0.2},
                {"horizon", 50},
                {"feedback_period", 1},
                {"u_max", 0.2 * kPi},
                {"du_max", 0.08 * kPi},
                {"r", 1e-2},
                {"q_population", 1.0},
                {"interior_slew", true},
                {"full_sqp_at_feedback", true},
                {"initial_control_guess", 0.1},
                {"model_order", 1},
                {"duration", 12.5},
                {"eval_time", 12.5},
                {"success_threshold", 1e-2}};
}

bool same_kind(const Params& a, const Params& b) {
  if (a.is_number() && b.is_number()) {
    return !a.is_number_integer() || b.is_number_integer();
  }
  return a.type() == b.type();
}

Params parse_value(const std::string& text) {
  try {
    return Params::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    return Params(text);
  }
}

/// Single qubit closed loop shared by qubit_detuning and feedback_sweep.
struct QubitLoop {
  TrajectoryRecord record;
  double eval_infidelity = 0.0;
};

QubitLoop run_qubit_mpc(const Params& p, double delta_plant, double delta_model,
                        int feedback_period) {
  const Liouvillian plant = qubit_liouvillian(delta_plant);
  const BilinearModel model = discretize(qubit_liouvillian(delta_model), num(p, "dt"), integer(p, "model_order"));
  MPCConfig cfg = mpc_config_from(p, {2}, 1);
  cfg.feedback_period = feedback_period;
  const QuantumState rho0 = QuantumState::basis(2, 0);
  const QuantumState target = QuantumState::basis(2, 1);
  const auto ref = ReferenceTrajectory::setpoint(target.to_real(), 1, cfg.horizon);
  QubitLoop out;
  out.record = run_closed_loop(plant, model, rho0, ref, cfg, steps_for(num(p, "duration"), cfg.dt));
  out.eval_infidelity = infidelity_at(out.record, plant, target, num(p, "eval_time"));
  return out;
}

RealVector levels_target(Eigen::Index dim) { return QuantumState::basis(dim, 1).to_real(); }

ScenarioResult transmon_cases(const Params& p, const RunOptions& opts, bool scale_scan) {
  const double dt = num(p, "dt");
  const double alpha = num(p, "alpha");
  const double u_max = num(p, "u_max");
  const double du_max = num(p, "du_max");
  const double threshold = num(p, "success_threshold");
  const int steps = steps_for(num(p, "duration"), dt);
  const Liouvillian plant = transmon_liouvillian(alpha, 3);
  const QuantumState rho0 = QuantumState::basis(3, 0);
  const QuantumState target = QuantumState::basis(3, 1);

  ScenarioResult res;
  res.summary["success_threshold"] = threshold;
  const std::vector<std::string> labels{"u_x", "u_y"};

  auto analytic = [&](double scale, ClipReport& clip) {
    auto [ux, uy] = drag_pulses(num(p, "duration"), dt, alpha, scale, num(p, "gaussian_sigma"));
    ux = clip_pulse(ux, u_max, du_max, clip);
    uy = clip_pulse(uy, u_max, du_max, clip);
    return run_open_loop(plant, rho0, target, pad_controls(to_control_sequence({ux, uy}), steps, 2),
                         dt);
  };

  struct Case {
    std::string name;
    double scale = 0.0;
    bool mpc = false;
    double model_alpha = 0.0;
    Eigen::Index model_levels = 3;
  };
  const std::vector<Case> cases{{"a_gaussian", 0.0, false},
                                {"b_drag", num(p, "drag_scale"), false},
                                {"c_mpc_full_model", 0.0, true, alpha, 3},
                                {"d_mpc_no_anharmonicity", 0.0, true, 0.0, 3},
                                {"e_mpc_qubit_subspace", 0.0, true, 0.0, 2}};
  std::vector<ScenarioRun> runs(cases.size());
  std::vector<ClipReport> clips(cases.size());
  parallel_for(static_cast<int>(cases.size()), opts.jobs, [&](int i) {
    const Case& c = cases[static_cast<std::size_t>(i)];
    ScenarioRun run{c.name, {}, labels};
    if (!c.mpc) {
      run.record = analytic(c.scale, clips[static_cast<std::size_t>(i)]);
    } else {
      const BilinearModel model =
          discretize(transmon_liouvillian(c.model_alpha, c.model_levels), dt, integer(p, "model_order"));
      const MPCConfig cfg = mpc_config_from(p, {c.model_levels}, 2);
      const auto ref = ReferenceTrajectory::setpoint(levels_target(c.model_levels), 2, cfg.horizon);
      ClosedLoopOptions lo;
      lo.target = target;
      if (c.model_levels < 3) {
        const Eigen::Index levels = c.model_levels;
        lo.feedback = [levels](const QuantumState& s) { return subspace_feedback(s, levels); };
      }
      run.record = run_closed_loop(plant, model, rho0, ref, cfg, steps, lo);
    }
    runs[static_cast<std::size_t>(i)] = std::move(run);
  });

  for (std::size_t i = 0; i < runs.size(); ++i) {
    const TrajectoryRecord& rec = runs[i].record;
    auto s = run_summary(rec, rec.infidelity.back(), threshold, u_max, du_max);
    const QuantumState final_state = rec.state(rec.steps());
    s["final_rho00"] = final_state.rho()(0, 0).real();
    s["final_rho11"] = final_state.rho()(1, 1).real();
    s["final_rho22"] = final_state.rho()(2, 2).real();
    if (!cases[i].mpc) {
      s["clipped_samples"] = clips[i].amplitude_clipped + clips[i].slew_clipped;
      s["max_clip_excess"] = std::max(clips[i].max_amplitude_excess, clips[i].max_slew_excess);
    }
    res.summary["runs"][runs[i].name] = s;
  }
  res.runs = std::move(runs);

  if (scale_scan) {
    const int points = integer(p, "scale_scan_points");
    const auto scales = linspace(0.0, 1.0, points);
    Table t{"drag_scale_scan", {"scale", "final_infidelity", "final_rho22"}, {}};
    t.rows.resize(scales.size());
    parallel_for(points, opts.jobs, [&](int i) {
      ClipReport clip;
      const double s = scales[static_cast<std::size_t>(i)];
      const TrajectoryRecord rec = analytic(s, clip);
      t.rows[static_cast<std::size_t>(i)] = {s, rec.infidelity.back(),
                                             rec.state(rec.steps()).rho()(2, 2).real()};
    });
    const auto best = std::min_element(t.rows.begin(), t.rows.end(),
                                       [](const auto& a, const auto& b) { return a[1] < b[1]; });
    res.summary["best_drag_scale"] = (*best)[0];
    res.summary["best_drag_infidelity"] = (*best)[1];
    res.tables.push_back(std::move(t));
  }
  return res;
}

}  // namespace

int steps_for(double duration, double dt) {
  if (!(dt > 0.0) || duration < 0.0) throw std::invalid_argument("duration must be >= 0, dt > 0");
  return static_cast<int>(std::ceil(duration / dt - 1e-9));
}

void parallel_for(int count, int jobs, const std::function<void(int)>& task) {
  const int workers = std::max(1, std::min(jobs, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Liouvillian qubit_liouvillian(double delta) {
  return build_liouvillian(0.5 * delta * standard_operator(OperatorKind::PauliZ, 2),
                           {0.5 * standard_operator(OperatorKind::PauliX, 2)});
}

Liouvillian transmon_liouvillian(double alpha, Eigen::Index levels) {
  const ComplexMatrix a = standard_operator(OperatorKind::Lower, levels);
  const ComplexMatrix ad = a.adjoint();
  ComplexMatrix h0 = ComplexMatrix::Zero(levels, levels);
  if (levels > 2) h0(2, 2) = alpha;
  const Complex i(0.0, 1.0);
  return build_liouvillian(h0, {0.5 * (a + ad), 0.5 * i * (a - ad)});
}

Liouvillian crosstalk_liouvillian(double xi) {
  const ComplexMatrix id = ComplexMatrix::Identity(2, 2);
  const ComplexMatrix sx = standard_operator(OperatorKind::PauliX, 2);
  const ComplexMatrix sy = standard_operator(OperatorKind::PauliY, 2);
  const ComplexMatrix sz = standard_operator(OperatorKind::PauliZ, 2);
  return build_liouvillian(0.5 * xi * kron(sz, sz), {0.5 * kron(sx, id), 0.5 * kron(id, sy)});
}

MPCConfig mpc_config_from(const Params& p, const std::vector<Eigen::Index>& block_dims,
                          Eigen::Index num_controls) {
  MPCConfig cfg;
  cfg.dt = num(p, "dt");
  cfg.horizon = integer(p, "horizon");
  Eigen::Index nx = 0;
  for (auto d : block_dims) nx += 2 * d * d;
  cfg.q = RealMatrix::Zero(nx, nx);
  Eigen::Index offset = 0;
  for (auto d : block_dims) {
    const Eigen::Index n = 2 * d * d;
    cfg.q.block(offset, offset, n, n) = population_weight(d, num(p, "q_population"));
    offset += n;
  }
  cfg.q_final = cfg.q;
  cfg.r = num(p, "r") * RealMatrix::Identity(num_controls, num_controls);
  cfg.u_max = RealVector::Constant(num_controls, num(p, "u_max"));
  cfg.u_min = -cfg.u_max;
  cfg.du_max = RealVector::Constant(num_controls, num(p, "du_max"));
  cfg.interior_slew = flag(p, "interior_slew");
  cfg.feedback_period = integer(p, "feedback_period");
  cfg.full_sqp_at_feedback = flag(p, "full_sqp_at_feedback");
  cfg.sqp.initial_control_guess = num(p, "initial_control_guess");
  cfg.validate(nx, num_controls);
  return cfg;
}

std::optional<double> settling_time(const TrajectoryRecord& rec, double threshold) {
  if (rec.infidelity.empty() || rec.infidelity.back() >= threshold) return std::nullopt;
  std::size_t k = rec.infidelity.size();
  while (k > 0 && rec.infidelity[k - 1] < threshold) --k;
  return rec.times[k];
}

int constraint_violations(const TrajectoryRecord& rec, double u_max, double du_max, double tol) {
  int count = 0;
  RealVector prev;
  for (const auto& u : rec.controls) {
    if (prev.size() == 0) prev = RealVector::Zero(u.size());
    const bool amp = (u.cwiseAbs().array() > u_max + tol).any();
    const bool slew = ((u - prev).cwiseAbs().array() > du_max + tol).any();
    if (amp || slew) ++count;
    prev = u;
  }
  return count;
}

std::vector<RealVector> pad_controls(std::vector<RealVector> controls, int total_steps,
                                     Eigen::Index num_controls) {
  if (static_cast<int>(controls.size()) > total_steps) {
    throw std::invalid_argument("pad_controls: pulse longer than the run");
  }
  controls.resize(static_cast<std::size_t>(total_steps), RealVector::Zero(num_controls));
  return controls;
}

const std::vector<ScenarioInfo>& scenario_registry() {
  static const std::vector<ScenarioInfo> registry{
      {"qubit_detuning", "area-pi pulse vs MPC on a detuned qubit with a resonant model",
       qubit_defaults(), scenario_qubit_detuning},
      {"transmon_drag", "Gaussian, DRAG and MPC pulses on a three-level transmon",
       transmon_defaults(), scenario_transmon_drag},
      {"drag_ladder", "transmon cases (a)-(e) with a DRAG scale scan", ladder_defaults(),
       scenario_drag_ladder},
      {"crosstalk", "two qubits with unmodelled ZZ crosstalk, reduced-state feedback",
       crosstalk_defaults(), scenario_crosstalk},
      {"nm_comparison", "MPC vs Nelder-Mead calibration counted in tomography rounds",
       nm_defaults(), scenario_nm_comparison},
      {"feedback_sweep", "final infidelity over detuning x feedback period", sweep_defaults(),
       scenario_feedback_sweep},
  };
  return registry;
}

const ScenarioInfo& find_scenario(const std::string& name) {
  for (const auto& s : scenario_registry()) {
    if (s.name == name) return s;
  }
  throw std::invalid_argument("unknown scenario: " + name);
}

Params resolve_params(const ScenarioInfo& info, const Params& file,
                      const std::vector<std::string>& overrides) {
  Params p = info.defaults;
  auto assign = [&](const std::string& key, const Params& value) {
    if (!p.contains(key)) {
      throw std::invalid_argument("unknown parameter '" + key + "' for scenario " + info.name);
    }
    if (!same_kind(p[key], value)) {
      throw std::invalid_argument("parameter '" + key + "' expects " +
                                  std::string(p[key].type_name()) + ", got " + value.type_name());
    }
    p[key] = p[key].is_number_float() && value.is_number() ? Params(value.get<double>()) : value;
  };
  if (!file.is_null()) {
    if (!file.is_object()) throw std::invalid_argument("config must be a JSON object");
    for (const auto& [key, value] : file.items()) {
      if (key == "scenario") continue;
      assign(key, value);
    }
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::invalid_argument("override must look like key=value: " + kv);
    }
    assign(kv.substr(0, eq), parse_value(kv.substr(eq + 1)));
  }
  validate_params(info, p);
  return p;
}

void validate_params(const ScenarioInfo& info, const Params& p) {
  auto positive = [&](const char* key) {
    if (p.contains(key) && !(num(p, key) > 0.0)) {
      throw std::invalid_argument(std::string("parameter '") + key + "' must be positive");
    }
  };
  for (const char* key : {"dt", "duration", "u_max", "du_max", "success_threshold"}) positive(key);
  if (p.contains("delta_unit")) (void)delta_unit_scale(p);
  if (p.contains("periods")) {
    for (const auto& v : p.at("periods")) {
      if (!v.is_number_integer() || v.get<int>() < 1) {
        throw std::invalid_argument("periods must be positive integers");
      }
    }
  }
  if (p.contains("eval_time") && num(p, "eval_time") > num(p, "duration") + 1e-12) {
    throw std::invalid_argument("eval_time exceeds duration");
  }
  std::vector<Eigen::Index> dims{2};
  Eigen::Index nu = 1;
  if (info.name == "transmon_drag" || info.name == "drag_ladder") {
    dims = {3};
    nu = 2;
    const double scale = num(p, "drag_scale");
    if (scale < 0.0 || scale > 1.0) throw std::invalid_argument("drag_scale outside [0, 1]");
    if (num(p, "alpha") == 0.0) throw std::invalid_argument("alpha must be nonzero");
  } else if (info.name == "crosstalk") {
    dims = {2, 2};
    nu = 2;
  }
  (void)mpc_config_from(p, dims, nu);
}

ScenarioResult scenario_qubit_detuning(const Params& p, const RunOptions& opts) {
  const double dt = num(p, "dt");
  const double u_max = num(p, "u_max");
  const double du_max = num(p, "du_max");
  const double threshold = num(p, "success_threshold");
  const double eval_time = num(p, "eval_time");
  const int steps = steps_for(num(p, "duration"), dt);
  const Liouvillian plant = qubit_liouvillian(num(p, "delta_plant"));
  const QuantumState rho0 = QuantumState::basis(2, 0);
  const QuantumState target = QuantumState::basis(2, 1);

  double pulse_duration = num(p, "pi_pulse_duration");
  if (pulse_duration <= 0.0) pulse_duration = shortest_area_pi_duration(dt, u_max, du_max);

  std::vector<ScenarioRun> runs(2);
  std::vector<double> eval(2);
  parallel_for(2, opts.jobs, [&](int i) {
    if (i == 0) {
      const RealVector pulse = area_pi_pulse(pulse_duration, dt, u_max, du_max);
      TrajectoryRecord rec = run_open_loop(
          plant, rho0, target, pad_controls(to_control_sequence({pulse}), steps, 1), dt);
      eval[0] = infidelity_at(rec, plant, target, eval_time);
      runs[0] = {"pi_pulse", std::move(rec), {"u"}};
    } else {
      QubitLoop loop = run_qubit_mpc(p, num(p, "delta_plant"), num(p, "delta_model"),
                                     integer(p, "feedback_period"));
      eval[1] = loop.eval_infidelity;
      runs[1] = {"mpc", std::move(loop.record), {"u"}};
    }
  });

  ScenarioResult res;
  res.scenario = "qubit_detuning";
  res.summary["success_threshold"] = threshold;
  res.summary["eval_time_ns"] = eval_time;
  res.summary["pi_pulse_duration_ns"] = pulse_duration;
  for (int i = 0; i < 2; ++i) {
    auto s = run_summary(runs[static_cast<std::size_t>(i)].record, eval[static_cast<std::size_t>(i)],
                         threshold, u_max, du_max);
    s["success"] = eval[static_cast<std::size_t>(i)] < threshold;
    res.summary["runs"][runs[static_cast<std::size_t>(i)].name] = s;
  }
  res.runs = std::move(runs);
  return res;
}

ScenarioResult scenario_transmon_drag(const Params& p, const RunOptions& opts) {
  ScenarioResult res = transmon_cases(p, opts, false);
  res.scenario = "transmon_drag";
  return res;
}

ScenarioResult scenario_drag_ladder(const Params& p, const RunOptions& opts) {
  ScenarioResult res = transmon_cases(p, opts, true);
  res.scenario = "drag_ladder";
  return res;
}

ScenarioResult scenario_crosstalk(const Params& p, const RunOptions& opts) {
  const double dt = num(p, "dt");
  const double u_max = num(p, "u_max");
  const double du_max = num(p, "du_max");
  const double threshold = num(p, "success_threshold");
  const int steps = steps_for(num(p, "duration"), dt);
  const Liouvillian coupled = crosstalk_liouvillian(num(p, "xi"));
  const Liouvillian uncoupled = crosstalk_liouvillian(0.0);
  const QuantumState rho0 = QuantumState::basis(4, 0);
  const QuantumState target = QuantumState::basis(4, 3);

  double pulse_duration = num(p, "pi_pulse_duration");
  if (pulse_duration <= 0.0) pulse_duration = shortest_area_pi_duration(dt, u_max, du_max);
  const RealVector pulse = area_pi_pulse(pulse_duration, dt, u_max, du_max);
  const auto pi_controls = pad_controls(to_control_sequence({pulse, pulse}), steps, 2);

  const Liouvillian qa = build_liouvillian(ComplexMatrix::Zero(2, 2),
                                           {0.5 * standard_operator(OperatorKind::PauliX, 2)});
  const Liouvillian qb = build_liouvillian(ComplexMatrix::Zero(2, 2),
                                           {0.5 * standard_operator(OperatorKind::PauliY, 2)});
  const BilinearModel model =
      block_diagonal({discretize(qa, dt, integer(p, "model_order")),
                      discretize(qb, dt, integer(p, "model_order"))});
  const MPCConfig cfg = mpc_config_from(p, {2, 2}, 2);
  RealVector x_ref(16);
  x_ref << levels_target(2), levels_target(2);
  const auto ref = ReferenceTrajectory::setpoint(x_ref, 2, cfg.horizon);
  ClosedLoopOptions lo;
  lo.target = target;
  lo.feedback = [](const QuantumState& s) { return reduced_feedback_adapter(s, 2, 2); };

  const std::vector<std::string> names{"pi_no_crosstalk", "pi_crosstalk", "mpc_crosstalk",
                                       "mpc_no_crosstalk"};
  std::vector<ScenarioRun> runs(names.size());
  parallel_for(static_cast<int>(names.size()), opts.jobs, [&](int i) {
    TrajectoryRecord rec;
    switch (i) {
      case 0: rec = run_open_loop(uncoupled, rho0, target, pi_controls, dt); break;
      case 1: rec = run_open_loop(coupled, rho0, target, pi_controls, dt); break;
      case 2: rec = run_closed_loop(coupled, model, rho0, ref, cfg, steps, lo); break;
      default: rec = run_closed_loop(uncoupled, model, rho0, ref, cfg, steps, lo); break;
    }
    runs[static_cast<std::size_t>(i)] = {names[static_cast<std::size_t>(i)], std::move(rec),
                                         {"u_A", "u_B"}};
  });

  ScenarioResult res;
  res.scenario = "crosstalk";
  res.summary["success_threshold"] = threshold;
  res.summary["pi_pulse_duration_ns"] = pulse_duration;
  Table bars{"final_density", {"run", "row", "col", "magnitude", "phase"}, {}};
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const TrajectoryRecord& rec = runs[r].record;
    res.summary["runs"][runs[r].name] =
        run_summary(rec, rec.infidelity.back(), threshold, u_max, du_max);
    const ComplexMatrix rho = rec.state(rec.steps()).rho();
    for (Eigen::Index i = 0; i < 4; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) {
        bars.rows.push_back({static_cast<double>(r), static_cast<double>(i),
                             static_cast<double>(j), std::abs(rho(i, j)), std::arg(rho(i, j))});
      }
    }
  }
  res.runs = std::move(runs);
  res.tables.push_back(std::move(bars));
  return res;
}

ScenarioResult scenario_nm_comparison(const Params& p, const RunOptions& opts) {
  const double dt = num(p, "dt");
  const double u_max = num(p, "u_max");
  const double du_max = num(p, "du_max");
  const double threshold = num(p, "success_threshold");
  const double unit = delta_unit_scale(p);
  const int pulse_steps = integer(p, "pulse_steps");
  const int max_evals = integer(p, "max_evaluations");
  const int num_random = integer(p, "num_random");
  const auto deltas =
      linspace(unit * num(p, "delta_min"), unit * num(p, "delta_max"), integer(p, "num_models"));
  const Liouvillian plant = qubit_liouvillian(unit * num(p, "delta_true"));
  const QuantumState rho0 = QuantumState::basis(2, 0);
  const QuantumState target = QuantumState::basis(2, 1);
  const std::size_t nm = deltas.size();

  // MPC: one tomography round per step.
  const MPCConfig cfg = mpc_config_from(p, {2}, 1);
  const auto ref = ReferenceTrajectory::setpoint(target.to_real(), 1, cfg.horizon);
  std::vector<std::vector<double>> mpc_curves(nm);
  parallel_for(static_cast<int>(nm), opts.jobs, [&](int i) {
    const BilinearModel model =
        discretize(qubit_liouvillian(deltas[static_cast<std::size_t>(i)]), dt, integer(p, "model_order"));
    const TrajectoryRecord rec = run_closed_loop(plant, model, rho0, ref, cfg, pulse_steps);
    mpc_curves[static_cast<std::size_t>(i)] = rec.infidelity;
  });

  // Model-aware simplex: open-loop optimal pulses for each model.
  MPCConfig ol_cfg = cfg;
  ol_cfg.horizon = pulse_steps;
  const auto ol_ref = ReferenceTrajectory::setpoint(target.to_real(), 1, pulse_steps);
  std::vector<RealVector> aware(nm);
  parallel_for(static_cast<int>(nm), opts.jobs, [&](int i) {
    const BilinearModel model =
        discretize(qubit_liouvillian(deltas[static_cast<std::size_t>(i)]), dt, integer(p, "model_order"));
    const auto u = open_loop_optimal_pulse(rho0.to_real(), model, ol_ref, ol_cfg);
    RealVector v(pulse_steps);
    for (int k = 0; k < pulse_steps; ++k) v(k) = u[static_cast<std::size_t>(k)](0);
    aware[static_cast<std::size_t>(i)] = v;
  });

  auto objective = [&](const RealVector& params) {
    ClipReport clip;
    const RealVector u = clip_pulse(params, u_max, du_max, clip);
    return run_open_loop(plant, rho0, target, to_control_sequence({u}), dt).infidelity.back();
  };

  ScenarioResult res;
  res.scenario = "nm_comparison";
  res.summary["success_threshold"] = threshold;
  res.summary["model_deltas_rad_per_ns"] = deltas;

  std::vector<NelderMeadResult> nm_runs(static_cast<std::size_t>(num_random) + 1);
  parallel_for(num_random + 1, opts.jobs, [&](int i) {
    if (i == 0) {
      if (static_cast<int>(nm) == pulse_steps + 1) {
        nm_runs[0] = nelder_mead_calibrate(objective, aware, max_evals);
      }
      return;
    }
    std::mt19937_64 rng(opts.seed + static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> dist(-num(p, "random_amplitude"),
                                                num(p, "random_amplitude"));
    RealVector seed(pulse_steps);
    for (int k = 0; k < pulse_steps; ++k) seed(k) = dist(rng);
    nm_runs[static_cast<std::size_t>(i)] =
        nelder_mead_calibrate(objective, coordinate_simplex(seed, du_max), max_evals);
  });

  Table mpc_table{"mpc_curve", {"qst_iteration", "mean_infidelity", "min_infidelity",
                                "max_infidelity"}, {}};
  Table mpc_models{"mpc_models", {"model_delta", "qst_iteration", "infidelity"}, {}};
  std::vector<nlohmann::ordered_json> reach;
  for (int k = 0; k <= pulse_steps; ++k) {
    double sum = 0.0;
    double lo = kInfinity;
    double hi = -kInfinity;
    for (std::size_t m = 0; m < nm; ++m) {
      const double v = mpc_curves[m][static_cast<std::size_t>(k)];
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      mpc_models.rows.push_back({deltas[m], static_cast<double>(k), v});
    }
    mpc_table.rows.push_back({static_cast<double>(k), sum / static_cast<double>(nm), lo, hi});
  }
  for (std::size_t m = 0; m < nm; ++m) {
    const auto& c = mpc_curves[m];
    const auto it = std::find_if(c.begin(), c.end(), [&](double v) { return v < threshold; });
    reach.push_back(it == c.end() ? nlohmann::ordered_json(nullptr)
                                  : nlohmann::ordered_json(it - c.begin()));
  }
  res.summary["mpc_first_success_iteration"] = reach;
  res.summary["mpc_mean_infidelity_final"] = mpc_table.rows.back()[1];

  if (!nm_runs[0].history.empty()) {
    Table aware_table{"nm_model_aware", {"evaluation", "infidelity", "best_infidelity"}, {}};
    for (std::size_t k = 0; k < nm_runs[0].history.size(); ++k) {
      aware_table.rows.push_back({static_cast<double>(k + 1), nm_runs[0].history[k],
                                  nm_runs[0].best_history[k]});
    }
    res.summary["nm_model_aware_best"] = nm_runs[0].best_value;
    res.summary["nm_model_aware_initial_best"] =
        nm_runs[0].best_history[std::min<std::size_t>(nm, nm_runs[0].best_history.size()) - 1];
    res.tables.push_back(std::move(aware_table));
  }

  if (num_random > 0) {
    Table random_table{"nm_random", {"evaluation", "mean_best", "std_best"}, {}};
    std::size_t len = nm_runs[1].best_history.size();
    for (int i = 1; i <= num_random; ++i) {
      len = std::min(len, nm_runs[static_cast<std::size_t>(i)].best_history.size());
    }
    for (std::size_t k = 0; k < len; ++k) {
      double mean = 0.0;
      for (int i = 1; i <= num_random; ++i) mean += nm_runs[static_cast<std::size_t>(i)].best_history[k];
      mean /= num_random;
      double var = 0.0;
      for (int i = 1; i <= num_random; ++i) {
        const double d = nm_runs[static_cast<std::size_t>(i)].best_history[k] - mean;
        var += d * d;
      }
      random_table.rows.push_back(
          {static_cast<double>(k + 1), mean, std::sqrt(var / num_random)});
    }
    res.summary["nm_random_simplex_evaluations"] = pulse_steps + 1;
    const std::size_t at = std::min<std::size_t>(static_cast<std::size_t>(pulse_steps), len);
    res.summary["nm_random_mean_best_at_qst"] = at > 0 ? random_table.rows[at - 1][1] : kInfinity;
    res.summary["nm_random_mean_best_final"] = len > 0 ? random_table.rows.back()[1] : kInfinity;
    res.tables.push_back(std::move(random_table));
  }
  res.tables.insert(res.tables.begin(), std::move(mpc_models));
  res.tables.insert(res.tables.begin(), std::move(mpc_table));
  return res;
}

ScenarioResult scenario_feedback_sweep(const Params& p, const RunOptions& opts) {
  const double unit = delta_unit_scale(p);
  const double threshold = num(p, "success_threshold");
  const double delta_model = unit * num(p, "delta_model");
  const auto deltas =
      linspace(unit * num(p, "delta_min"), unit * num(p, "delta_max"), integer(p, "num_deltas"));
  const auto periods = p.at("periods").get<std::vector<int>>();
  const int cells = static_cast<int>(deltas.size() * periods.size());
  std::vector<double> inf(static_cast<std::size_t>(cells));
  std::vector<int> violations(static_cast<std::size_t>(cells));
  parallel_for(cells, opts.jobs, [&](int c) {
    const auto i = static_cast<std::size_t>(c) / periods.size();
    const auto j = static_cast<std::size_t>(c) % periods.size();
    const QubitLoop loop = run_qubit_mpc(p, delta_model + deltas[i], delta_model, periods[j]);
    inf[static_cast<std::size_t>(c)] = loop.eval_infidelity;
    violations[static_cast<std::size_t>(c)] =
        constraint_violations(loop.record, num(p, "u_max"), num(p, "du_max"));
  });

  Table grid{"grid", {"delta", "period", "infidelity"}, {}};
  for (int c = 0; c < cells; ++c) {
    const auto i = static_cast<std::size_t>(c) / periods.size();
    const auto j = static_cast<std::size_t>(c) % periods.size();
    grid.rows.push_back({deltas[i], static_cast<double>(periods[j]), inf[static_cast<std::size_t>(c)]});
  }
  ScenarioResult res;
  res.scenario = "feedback_sweep";
  res.summary["success_threshold"] = threshold;
  res.summary["eval_time_ns"] = num(p, "eval_time");
  res.summary["grid_min_infidelity"] = *std::min_element(inf.begin(), inf.end());
  res.summary["grid_max_infidelity"] = *std::max_element(inf.begin(), inf.end());
  int total_violations = 0;
  for (int v : violations) total_violations += v;
  res.summary["constraint_violations"] = total_violations;
  res.tables.push_back(std::move(grid));
  return res;
}

}  // namespace qmpc
