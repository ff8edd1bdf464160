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

#include <doctest.h>

#include "qmpc/baselines.hpp"
#include "qmpc/scenarios.hpp"
#include "support.hpp"

#include <numbers>
#include <stdexcept>

using namespace qmpc;
using namespace qmpc::testing;

namespace {

constexpr double kPi = std::numbers::pi;

double max_slew(const RealVector& u) {
  double worst = std::abs(u(0));
  for (Eigen::Index k = 1; k < u.size(); ++k) worst = std::max(worst, std::abs(u(k) - u(k - 1)));
  return std::max(worst, std::abs(u(u.size() - 1)));
}

}  // namespace

TEST_CASE("trapezoid pi pulse has area pi within the bounds") {
  const double dt = 0.2;
  const double u_max = 0.2 * kPi;
  const double du_max = 0.08 * kPi;
  for (double duration : {5.4, 6.0, 8.0, 12.0}) {
    const RealVector u = area_pi_pulse(duration, dt, u_max, du_max);
    CHECK(u.size() == std::lround(duration / dt));
    CHECK(u.sum() * dt == doctest::Approx(kPi).epsilon(1e-12));
    CHECK(u.maxCoeff() <= u_max + 1e-12);
    CHECK(u.minCoeff() >= 0.0);
    CHECK(max_slew(u) <= du_max + 1e-12);
  }
  CHECK_THROWS_AS(area_pi_pulse(2.0, dt, u_max, du_max), std::invalid_argument);
}

TEST_CASE("shortest pi duration is the first feasible step count") {
  const double dt = 0.2;
  const double u_max = 0.2 * kPi;
  const double du_max = 0.08 * kPi;
  const double t = shortest_area_pi_duration(dt, u_max, du_max);
  CHECK(t == doctest::Approx(5.4));
  CHECK_NOTHROW(area_pi_pulse(t, dt, u_max, du_max));
  CHECK_THROWS_AS(area_pi_pulse(t - dt, dt, u_max, du_max), std::invalid_argument);
}

TEST_CASE("pi pulse on a matched plant flips the qubit") {
  const double dt = 0.2;
  const RealVector u = area_pi_pulse(6.0, dt, 0.2 * kPi, 0.08 * kPi);
  const TrajectoryRecord rec = run_open_loop(qubit_liouvillian(0.0), QuantumState::basis(2, 0),
                                             QuantumState::basis(2, 1), to_control_sequence({u}), dt);
  CHECK(rec.infidelity.back() <= 1e-4);
}

TEST_CASE("Gaussian pulse integrates to pi and vanishes at the edges") {
  PulseShape g;
  g.kind = PulseKind::Gaussian;
  g.duration = 10.0;
  const RealVector u = g.sample(0.4);
  CHECK(u.size() == 25);
  CHECK(u.sum() * 0.4 == doctest::Approx(kPi).epsilon(1e-12));
  CHECK(u(0) < 0.05 * u.maxCoeff());
  for (Eigen::Index k = 0; k < u.size(); ++k) CHECK(u(k) == doctest::Approx(u(u.size() - 1 - k)));
}

TEST_CASE("DRAG quadrature is odd and integrates to zero") {
  const auto [ux, uy] = drag_pulses(10.0, 0.4, -0.6, 0.6);
  REQUIRE(ux.size() == uy.size());
  const Eigen::Index n = uy.size();
  for (Eigen::Index k = 0; k < n; ++k) {
    CHECK(uy(k) == doctest::Approx(-uy(n - 1 - k)).epsilon(1e-12));
  }
  CHECK(std::abs(uy.sum() * 0.4) < 1e-12);
  CHECK(uy.cwiseAbs().maxCoeff() > 0.0);

  const auto [gx, gy] = drag_pulses(10.0, 0.4, -0.6, 0.0);
  CHECK(gy.cwiseAbs().maxCoeff() == 0.0);
  CHECK((gx - ux).norm() == 0.0);
  CHECK_THROWS_AS(drag_pulses(10.0, 0.4, 0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(drag_pulses(10.0, 0.4, -0.6, 1.5), std::invalid_argument);
}

TEST_CASE("DRAG quadrature is the scaled derivative of the envelope") {
  const double dt = 0.01;
  const double alpha = -0.6;
  const double scale = 0.6;
  const auto [ux, uy] = drag_pulses(10.0, dt, alpha, scale);
  for (Eigen::Index k = 100; k < 900; k += 50) {
    const double deriv = (ux(k + 1) - ux(k - 1)) / (2.0 * dt);
    CHECK(uy(k) == doctest::Approx(scale * deriv / alpha).epsilon(1e-3));
  }
}

TEST_CASE("clipping enforces amplitude then slew") {
  RealVector u(5);
  u << 0.0, 1.0, 1.0, -1.0, 0.0;
  ClipReport rep;
  const RealVector c = clip_pulse(u, 0.5, 0.3, rep);
  CHECK(rep.clipped());
  CHECK(rep.amplitude_clipped == 3);
  CHECK(c.cwiseAbs().maxCoeff() <= 0.5 + 1e-15);
  for (Eigen::Index k = 1; k < c.size(); ++k) CHECK(std::abs(c(k) - c(k - 1)) <= 0.3 + 1e-15);
  CHECK(std::abs(c(0)) <= 0.3);

  ClipReport none;
  const RealVector same = clip_pulse(RealVector::Constant(3, 0.1), 0.5, 0.3, none);
  CHECK_FALSE(none.clipped());
  CHECK(same(2) == 0.1);
}

TEST_CASE("Nelder-Mead finds the minimum of a quadratic") {
  RealVector center(3);
  center << 1.0, -2.0, 0.5;
  auto f = [&](const RealVector& v) { return (v - center).squaredNorm() + 3.0; };
  const NelderMeadResult r = nelder_mead_calibrate(f, coordinate_simplex(RealVector::Zero(3), 1.0), 2000);
  CHECK(r.best_value == doctest::Approx(3.0).epsilon(1e-8));
  CHECK((r.best - center).norm() < 1e-3);
  for (std::size_t k = 1; k < r.best_history.size(); ++k) {
    CHECK(r.best_history[k] <= r.best_history[k - 1]);
  }
  CHECK(r.history.size() <= 2000);
}

TEST_CASE("Nelder-Mead spends its first n+1 evaluations on the simplex") {
  const RealVector seed = RealVector::LinSpaced(10, -0.5, 0.5);
  const auto vertices = coordinate_simplex(seed, 0.1);
  REQUIRE(vertices.size() == 11);
  std::vector<RealVector> calls;
  auto f = [&](const RealVector& v) {
    calls.push_back(v);
    return v.squaredNorm();
  };
  const NelderMeadResult r = nelder_mead_calibrate(f, vertices, 30);
  REQUIRE(calls.size() == 30);
  CHECK(r.history.size() == 30);
  for (std::size_t k = 0; k < 11; ++k) CHECK((calls[k] - vertices[k]).norm() == 0.0);
  bool new_point = true;
  for (const auto& v : vertices) new_point = new_point && (calls[11] - v).norm() > 0.0;
  CHECK(new_point);
}

TEST_CASE("Nelder-Mead respects small budgets and validates the simplex") {
  auto f = [](const RealVector& v) { return v.squaredNorm(); };
  const NelderMeadResult r = nelder_mead_calibrate(f, coordinate_simplex(RealVector::Ones(2), 0.5), 2);
  CHECK(r.history.size() == 2);
  CHECK_THROWS_AS(nelder_mead_calibrate(f, {RealVector::Ones(2)}, 10), std::invalid_argument);

  SimplexState s;
  s.vertices = coordinate_simplex(RealVector::Zero(2), 1.0);
  s.values = {1.0, 2.0, std::nan("")};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("open-loop optimal pulse solves the matched qubit") {
  Params p = find_scenario("nm_comparison").defaults;
  MPCConfig cfg = mpc_config_from(p, {2}, 1);
  cfg.horizon = 10;
  const BilinearModel model = discretize(qubit_liouvillian(0.0), cfg.dt, 1);
  const QuantumState target = QuantumState::basis(2, 1);
  const auto ref = ReferenceTrajectory::setpoint(target.to_real(), 1, 10);
  const auto u = open_loop_optimal_pulse(QuantumState::basis(2, 0).to_real(), model, ref, cfg);
  REQUIRE(u.size() == 10);
  const ConstraintReport c = check_constraints(u, cfg.u_min, cfg.u_max, cfg.du_max);
  CHECK(c.amplitude_excess <= 1e-6);
  CHECK(c.slew_excess <= 1e-6);
  cfg.horizon = 0;
  CHECK(open_loop_optimal_pulse(QuantumState::basis(2, 0).to_real(), model,
                                ReferenceTrajectory::setpoint(target.to_real(), 1, 0), cfg)
            .empty());
}
