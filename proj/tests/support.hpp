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

// Reference implementations used as test oracles. Nothing here calls into the
// library routine it is meant to check.

#pragma once

#include "qmpc/dynamics.hpp"
#include "qmpc/mpc.hpp"
#include "qmpc/qcore.hpp"
#include "qmpc/qpsolver.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace qmpc::testing {

inline ComplexMatrix random_complex(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  ComplexMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = Complex(g(rng), g(rng));
  }
  return m;
}

inline ComplexMatrix random_hermitian(Eigen::Index dim, std::mt19937_64& rng) {
  const ComplexMatrix a = random_complex(dim, dim, rng);
  return 0.5 * (a + a.adjoint());
}

inline ComplexVector random_ket(Eigen::Index dim, std::mt19937_64& rng) {
  ComplexVector v = random_complex(dim, 1, rng);
  return v / v.norm();
}

inline QuantumState random_mixed(Eigen::Index dim, std::mt19937_64& rng) {
  const ComplexMatrix a = random_complex(dim, dim, rng);
  ComplexMatrix rho = a * a.adjoint();
  rho /= rho.trace().real();
  return QuantumState(rho);
}

/// Entrywise row-major stacking written out by hand.
inline ComplexVector stack_rows(const ComplexMatrix& m) {
  ComplexVector v(m.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) v(k++) = m(i, j);
  }
  return v;
}

/// Kronecker product by explicit index arithmetic.
inline ComplexMatrix kron_loops(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      for (Eigen::Index k = 0; k < b.rows(); ++k) {
        for (Eigen::Index l = 0; l < b.cols(); ++l) {
          out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
        }
      }
    }
  }
  return out;
}

/// exp(−iHt) through the Hermitian eigendecomposition.
inline ComplexMatrix unitary_from_hamiltonian(const ComplexMatrix& h, double t) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
  ComplexVector phases(h.rows());
  for (Eigen::Index k = 0; k < h.rows(); ++k) {
    phases(k) = std::exp(Complex(0.0, -es.eigenvalues()(k) * t));
  }
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

/// 2 × 2 squared fidelity, Tr(ρσ) + 2 sqrt(det ρ det σ).
inline double qubit_fidelity(const ComplexMatrix& rho, const ComplexMatrix& sigma) {
  const double overlap = (rho * sigma).trace().real();
  const double dr = std::max(0.0, rho.determinant().real());
  const double ds = std::max(0.0, sigma.determinant().real());
  return overlap + 2.0 * std::sqrt(dr * ds);
}

/// Accelerated projected gradient on min ½zᵀPz + qᵀz over lo ≤ z ≤ hi.
inline RealVector projected_gradient_box(const RealMatrix& p, const RealVector& q,
                                         const RealVector& lo, const RealVector& hi,
                                         int iterations = 200000) {
  const double lipschitz = Eigen::SelfAdjointEigenSolver<RealMatrix>(p).eigenvalues().maxCoeff();
  const double step = 1.0 / lipschitz;
  RealVector z = RealVector::Zero(q.size()).cwiseMax(lo).cwiseMin(hi);
  RealVector y = z;
  double t = 1.0;
  for (int k = 0; k < iterations; ++k) {
    const RealVector next = (y - step * (p * y + q)).cwiseMax(lo).cwiseMin(hi);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = next + ((t - 1.0) / t_next) * (next - z);
    const double change = (next - z).lpNorm<Eigen::Infinity>();
    z = next;
    t = t_next;
    if (change < 1e-15) break;
  }
  return z;
}

/// Jacobians of x ↦ f(x, u) by central differences.
struct FiniteDifference {
  RealMatrix dx;
  RealMatrix du;
};

inline FiniteDifference central_difference(const BilinearModel& model, const RealVector& x,
                                           const RealVector& u, double h = 1e-5) {
  FiniteDifference fd{RealMatrix(x.size(), x.size()), RealMatrix(x.size(), u.size())};
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    RealVector xp = x;
    RealVector xm = x;
    xp(k) += h;
    xm(k) -= h;
    fd.dx.col(k) = (model.step(xp, u) - model.step(xm, u)) / (2.0 * h);
  }
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    RealVector up = u;
    RealVector um = u;
    up(k) += h;
    um(k) -= h;
    fd.du.col(k) = (model.step(x, up) - model.step(x, um)) / (2.0 * h);
  }
  return fd;
}

// ---------------------------------------------------------------------------
// Property measurements shared by the unit tests and the acceptance binary.
// Each returns the worst error observed.

inline double vec_law_error(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim(1, 5);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Eigen::Index n = dim(rng);
    const Eigen::Index m = dim(rng);
    const Eigen::Index p = dim(rng);
    const Eigen::Index r = dim(rng);
    const ComplexMatrix a = random_complex(n, m, rng);
    const ComplexMatrix b = random_complex(m, p, rng);
    const ComplexMatrix c = random_complex(p, r, rng);
    const ComplexVector lhs = stack_rows(a * b * c);
    const ComplexVector rhs = kron(a, c.transpose()) * vectorize(b);
    worst = std::max(worst, (lhs - rhs).lpNorm<Eigen::Infinity>() / std::max(1.0, lhs.norm()));
  }
  return worst;
}

inline double embedding_homomorphism_error(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim(1, 6);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Eigen::Index n = dim(rng);
    const ComplexMatrix a = random_complex(n, n, rng);
    const ComplexMatrix b = random_complex(n, n, rng);
    const ComplexVector v = random_complex(n, 1, rng);
    const double scale = std::max(1.0, (a * b).norm());
    worst = std::max(worst, (real_embed(a * b) - real_embed(a) * real_embed(b)).lpNorm<Eigen::Infinity>() / scale);
    worst = std::max(worst, (real_embed(a) * real_embed_vec(v) - real_embed_vec(a * v)).lpNorm<Eigen::Infinity>() / scale);
    worst = std::max(worst, (real_embed(a + b) - real_embed(a) - real_embed(b)).lpNorm<Eigen::Infinity>() / scale);
    worst = std::max(worst, (real_unembed_vec(real_embed_vec(v)) - v).lpNorm<Eigen::Infinity>());
  }
  return worst;
}

struct DriftReport {
  double trace = 0.0;
  double hermiticity = 0.0;
  double purity = 0.0;
};

/// Runs the exact plant for `steps` steps under random bounded controls and
/// tracks trace, Hermiticity and (unitary case) purity against the start.
inline DriftReport plant_drift(const Liouvillian& plant, int steps, double dt, double u_max,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(-u_max, u_max);
  QuantumState rho = random_mixed(plant.dim(), rng);
  const double purity0 = (rho.rho() * rho.rho()).trace().real();
  DriftReport d;
  for (int k = 0; k < steps; ++k) {
    RealVector u(plant.num_controls());
    for (Eigen::Index j = 0; j < u.size(); ++j) u(j) = amp(rng);
    rho = step_truth(plant, rho, u, dt);
    const ComplexMatrix& m = rho.rho();
    d.trace = std::max(d.trace, std::abs(m.trace() - Complex(1.0, 0.0)));
    d.hermiticity = std::max(d.hermiticity, (m - m.adjoint()).lpNorm<Eigen::Infinity>());
    d.purity = std::max(d.purity, std::abs((m * m).trace().real() - purity0));
  }
  return d;
}

/// Both sides of ½‖x − x_ref‖² = 1 − F computed from scratch on random pure pairs.
inline double fidelity_norm_identity_error(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim(2, 6);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Eigen::Index n = dim(rng);
    const ComplexVector a = random_ket(n, rng);
    const ComplexVector b = random_ket(n, rng);
    const QuantumState ra = QuantumState::pure(a);
    const QuantumState rb = QuantumState::pure(b);
    const double lhs = 0.5 * (ra.to_real() - rb.to_real()).squaredNorm();
    const double rhs = 1.0 - std::norm(a.dot(b));
    worst = std::max(worst, std::abs(lhs - rhs));
    worst = std::max(worst, std::abs(fidelity(ra, rb) - std::norm(a.dot(b))));
  }
  return worst;
}

/// Relative mismatch between the analytic linearization and central
/// differences at random points, for the given model.
inline double linearization_error(const BilinearModel& model, int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    RealVector x(model.state_size());
    RealVector u(model.num_controls());
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = g(rng);
    for (Eigen::Index k = 0; k < u.size(); ++k) u(k) = g(rng);
    const LinearizedDynamics lin = linearize(model, {x, model.step(x, u)}, {u});
    const FiniteDifference fd = central_difference(model, x, u);
    worst = std::max(worst, (lin.a[0] - fd.dx).norm() / std::max(1.0, fd.dx.norm()));
    worst = std::max(worst, (lin.b[0] - fd.du).norm() / std::max(1.0, fd.du.norm()));
  }
  return worst;
}

struct BoxQP {
  RealMatrix p;
  RealVector q;
  RealVector lo;
  RealVector hi;
};

inline BoxQP random_box_qp(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(3, 20);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> width(0.1, 2.0);
  const int n = size(rng);
  RealMatrix m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) m(i, j) = g(rng);
  }
  BoxQP b;
  b.p = m.transpose() * m / n + 0.05 * RealMatrix::Identity(n, n);
  b.q = RealVector(n);
  b.lo = RealVector(n);
  b.hi = RealVector(n);
  for (int i = 0; i < n; ++i) {
    b.q(i) = 3.0 * g(rng);
    b.lo(i) = g(rng) - width(rng);
    b.hi(i) = b.lo(i) + 2.0 * width(rng);
  }
  return b;
}

inline QPProblem to_qp(const BoxQP& b) {
  QPProblem qp;
  qp.p = b.p.sparseView();
  qp.q = b.q;
  SparseMatrix id(b.q.size(), b.q.size());
  id.setIdentity();
  qp.g = id;
  qp.l = b.lo;
  qp.u = b.hi;
  return qp;
}

/// Worst objective gap between the ADMM solver and the projected-gradient
/// oracle; also reports whether every ADMM solution was returned as solved.
inline std::pair<double, bool> box_qp_gap(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  bool all_solved = true;
  for (int t = 0; t < trials; ++t) {
    const BoxQP b = random_box_qp(rng);
    const RealVector ref = projected_gradient_box(b.p, b.q, b.lo, b.hi);
    const double f_ref = 0.5 * ref.dot(b.p * ref) + b.q.dot(ref);
    const QPSolution sol = solve(to_qp(b));
    all_solved = all_solved && sol.status == QPStatus::Solved;
    const RealVector z = sol.z.cwiseMax(b.lo).cwiseMin(b.hi);
    const double f = 0.5 * z.dot(b.p * z) + b.q.dot(z);
    worst = std::max(worst, std::abs(f - f_ref));
  }
  return {worst, all_solved};
}

/// Endpoint error of the first-order model against the exact propagator for
/// a constant drive on the detuned qubit, at dt and dt/2.
inline double euler_halving_ratio(const Liouvillian& l, const RealVector& u, double duration,
                                  double dt) {
  const QuantumState rho0 = QuantumState::basis(l.dim(), 0);
  const ComplexMatrix prop = expm(l.generator(u) * duration);
  const RealVector exact = real_embed_vec(prop * vectorize(rho0.rho()));
  auto endpoint_error = [&](double h) {
    const BilinearModel model = discretize_first_order(l, h);
    const int steps = static_cast<int>(std::lround(duration / h));
    RealVector x = rho0.to_real();
    for (int k = 0; k < steps; ++k) x = model.step(x, u);
    return (x - exact).norm();
  };
  return endpoint_error(dt) / endpoint_error(0.5 * dt);
}

}  // namespace qmpc::testing
