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

#include "qmpc/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace qmpc {
namespace {

int whole_steps(double duration, double dt) {
  if (!(dt > 0.0) || !(duration >= 0.0)) {
    throw std::invalid_argument("pulse: duration must be >= 0 and dt > 0");
  }
  const double n = duration / dt;
  const double rounded = std::round(n);
  if (std::abs(n - rounded) > 1e-9 * std::max(1.0, n)) {
    std::ostringstream msg;
    msg << "pulse: duration " << duration << " is not a whole number of steps of " << dt;
    throw std::invalid_argument(msg.str());
  }
  return static_cast<int>(rounded);
}

/// Plateau a with Σ min(a, caps_k) = target; caps sorted ascending.
double solve_plateau(std::vector<double> caps, double target) {
  std::sort(caps.begin(), caps.end());
  double below = 0.0;
  const auto n = caps.size();
  for (std::size_t j = 0; j < n; ++j) {
    const double remaining = static_cast<double>(n - j);
    const double a = (target - below) / remaining;
    if (a <= caps[j]) return a;
    below += caps[j];
  }
  return caps.back();
}

RealVector gaussian_samples(double duration, double dt, double sigma, bool derivative) {
  const int n = whole_steps(duration, dt);
  const double center = 0.5 * duration;
  const double floor_value = std::exp(-center * center / (2.0 * sigma * sigma));
  RealVector g(n);
  RealVector dg(n);
  for (int k = 0; k < n; ++k) {
    const double t = (k + 0.5) * dt - center;
    const double e = std::exp(-t * t / (2.0 * sigma * sigma));
    g(k) = e - floor_value;
    dg(k) = -t / (sigma * sigma) * e;
  }
  const double norm = g.sum() * dt;
  if (!(norm > 0.0)) throw std::invalid_argument("gaussian pulse: empty envelope");
  return (derivative ? dg : g) / norm;
}

}  // namespace

RealVector PulseShape::sample(double dt) const {
  switch (kind) {
    case PulseKind::ConstantAreaPi: {
      const int n = whole_steps(duration, dt);
      if (n == 0) throw std::invalid_argument("area pulse: zero duration");
      std::vector<double> caps(static_cast<std::size_t>(n));
      for (int k = 0; k < n; ++k) {
        caps[static_cast<std::size_t>(k)] =
            std::min({amplitude_cap, (k + 1) * ramp, (n - k) * ramp});
      }
      const double reachable = std::accumulate(caps.begin(), caps.end(), 0.0) * dt;
      if (reachable < area * (1.0 - 1e-12)) {
        const double peak_ramp = std::min((n + 1) / 2 * ramp, (n - (n - 1) / 2) * ramp);
        std::ostringstream msg;
        msg << "area pulse: area " << area << " unreachable in " << duration << " ns (max "
            << reachable << "); binding constraint: "
            << (amplitude_cap < peak_ramp ? "u_max" : "du_max");
        throw std::invalid_argument(msg.str());
      }
      const double a = solve_plateau(caps, area / dt);
      RealVector u(n);
      for (int k = 0; k < n; ++k) u(k) = std::min(a, caps[static_cast<std::size_t>(k)]);
      return u;
    }
    case PulseKind::Gaussian:
      return area * gaussian_samples(duration, dt, effective_sigma(), false);
    case PulseKind::GaussianDerivative:
      return area * gaussian_samples(duration, dt, effective_sigma(), true);
  }
  throw std::logic_error("PulseShape: unknown kind");
}

RealVector area_pi_pulse(double duration, double dt, double u_max, double du_max) {
  PulseShape shape;
  shape.kind = PulseKind::ConstantAreaPi;
  shape.duration = duration;
  shape.amplitude_cap = u_max;
  shape.ramp = du_max;
  return shape.sample(dt);
}

double shortest_area_pi_duration(double dt, double u_max, double du_max) {
  for (int n = 1; n < 1000000; ++n) {
    double total = 0.0;
    for (int k = 0; k < n; ++k) total += std::min({u_max, (k + 1) * du_max, (n - k) * du_max});
    if (total * dt >= std::numbers::pi * (1.0 - 1e-12)) return n * dt;
  }
  throw std::invalid_argument("shortest_area_pi_duration: bounds admit no area-pi pulse");
}

std::pair<RealVector, RealVector> drag_pulses(double duration, double dt, double alpha,
                                              double scale, double sigma) {
  if (alpha == 0.0) throw std::invalid_argument("drag_pulses: alpha must be nonzero");
  if (scale < 0.0 || scale > 1.0) throw std::invalid_argument("drag_pulses: scale outside [0, 1]");
  PulseShape shape;
  shape.kind = PulseKind::Gaussian;
  shape.duration = duration;
  shape.sigma = sigma;
  RealVector ux = shape.sample(dt);
  shape.kind = PulseKind::GaussianDerivative;
  RealVector uy = (scale / alpha) * shape.sample(dt);
  return {std::move(ux), std::move(uy)};
}

RealVector clip_pulse(const RealVector& u, double u_max, double du_max, ClipReport& report,
                      double u_before) {
  RealVector out = u;
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    const double excess = std::abs(out(k)) - u_max;
    if (excess > 0.0) {
      ++report.amplitude_clipped;
      report.max_amplitude_excess = std::max(report.max_amplitude_excess, excess);
      out(k) = std::copysign(u_max, out(k));
    }
  }
  double prev = u_before;
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    const double step = out(k) - prev;
    const double excess = std::abs(step) - du_max;
    if (excess > 0.0) {
      ++report.slew_clipped;
      report.max_slew_excess = std::max(report.max_slew_excess, excess);
      out(k) = prev + std::copysign(du_max, step);
    }
    prev = out(k);
  }
  return out;
}

std::vector<RealVector> to_control_sequence(const std::vector<RealVector>& channels) {
  if (channels.empty()) return {};
  const Eigen::Index n = channels.front().size();
  for (const auto& c : channels) {
    if (c.size() != n) throw std::invalid_argument("to_control_sequence: channel lengths differ");
  }
  std::vector<RealVector> seq(static_cast<std::size_t>(n),
                              RealVector(static_cast<Eigen::Index>(channels.size())));
  for (Eigen::Index k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < channels.size(); ++j) {
      seq[static_cast<std::size_t>(k)](static_cast<Eigen::Index>(j)) = channels[j](k);
    }
  }
  return seq;
}

void SimplexState::validate() const {
  const Eigen::Index n = num_params();
  if (n == 0 || vertices.size() != static_cast<std::size_t>(n + 1)) {
    throw std::invalid_argument("SimplexState: need n_params + 1 vertices");
  }
  for (const auto& v : vertices) {
    if (v.size() != n) throw std::invalid_argument("SimplexState: vertex lengths differ");
  }
  if (values.size() != vertices.size()) {
    throw std::invalid_argument("SimplexState: one objective value per vertex");
  }
  for (double f : values) {
    if (!std::isfinite(f)) throw std::invalid_argument("SimplexState: non-finite objective");
  }
}

std::vector<RealVector> coordinate_simplex(const RealVector& seed, double step) {
  std::vector<RealVector> out{seed};
  for (Eigen::Index i = 0; i < seed.size(); ++i) {
    RealVector v = seed;
    v(i) += step;
    out.push_back(std::move(v));
  }
  return out;
}

NelderMeadResult nelder_mead_calibrate(const Objective& objective,
                                       const std::vector<RealVector>& initial_vertices,
                                       int max_evaluations,
                                       const NelderMeadCoefficients& coefficients) {
  NelderMeadResult res;
  SimplexState& s = res.final_simplex;
  s.coefficients = coefficients;
  s.vertices = initial_vertices;

  auto evaluate = [&](const RealVector& p) {
    const double f = objective(p);
    if (!std::isfinite(f)) throw std::invalid_argument("nelder_mead_calibrate: non-finite objective");
    res.history.push_back(f);
    if (f < res.best_value) {
      res.best_value = f;
      res.best = p;
    }
    res.best_history.push_back(res.best_value);
    return f;
  };
  auto budget_left = [&] { return static_cast<int>(res.history.size()) < max_evaluations; };

  const auto nv = s.vertices.size();
  for (std::size_t i = 0; i < nv && budget_left(); ++i) s.values.push_back(evaluate(s.vertices[i]));
  if (s.values.size() < nv) return res;
  s.validate();

  const auto n = static_cast<double>(nv - 1);
  std::vector<std::size_t> order(nv);
  while (budget_left()) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s.values[a] < s.values[b]; });
    std::vector<RealVector> v;
    std::vector<double> f;
    for (auto i : order) {
      v.push_back(s.vertices[i]);
      f.push_back(s.values[i]);
    }
    s.vertices = std::move(v);
    s.values = std::move(f);
    ++res.iterations;

    RealVector centroid = RealVector::Zero(s.num_params());
    for (std::size_t i = 0; i + 1 < nv; ++i) centroid += s.vertices[i];
    centroid /= n;
    const RealVector& worst = s.vertices.back();
    const double f_best = s.values.front();
    const double f_second = s.values[nv - 2];
    const double f_worst = s.values.back();

    const RealVector xr = centroid + coefficients.reflection * (centroid - worst);
    const double fr = evaluate(xr);
    if (fr < f_best) {
      if (!budget_left()) {
        s.vertices.back() = xr;
        s.values.back() = fr;
        break;
      }
      const RealVector xe = centroid + coefficients.expansion * (xr - centroid);
      const double fe = evaluate(xe);
      s.vertices.back() = fe < fr ? xe : xr;
      s.values.back() = std::min(fe, fr);
      continue;
    }
    if (fr < f_second) {
      s.vertices.back() = xr;
      s.values.back() = fr;
      continue;
    }
    if (!budget_left()) break;
    bool contracted = false;
    if (fr < f_worst) {
      const RealVector xc = centroid + coefficients.contraction * (xr - centroid);
      const double fc = evaluate(xc);
      if (fc <= fr) {
        s.vertices.back() = xc;
        s.values.back() = fc;
        contracted = true;
      }
    } else {
      const RealVector xc = centroid + coefficients.contraction * (worst - centroid);
      const double fc = evaluate(xc);
      if (fc < f_worst) {
        s.vertices.back() = xc;
        s.values.back() = fc;
        contracted = true;
      }
    }
    if (contracted) continue;
    for (std::size_t i = 1; i < nv && budget_left(); ++i) {
      s.vertices[i] = s.vertices[0] + coefficients.shrink * (s.vertices[i] - s.vertices[0]);
      s.values[i] = evaluate(s.vertices[i]);
    }
  }
  return res;
}

std::vector<RealVector> open_loop_optimal_pulse(const RealVector& x0, const BilinearModel& model,
                                                const ReferenceTrajectory& ref,
                                                const MPCConfig& cfg) {
  if (cfg.horizon == 0) return {};
  const GuessTrajectory guess = GuessTrajectory::initial(x0, model.num_controls(), cfg.horizon,
                                                         cfg.sqp.initial_control_guess);
  return sqp_solve(x0, model, ref, cfg, guess, RealVector::Zero(model.num_controls())).u;
}

}  // namespace qmpc
