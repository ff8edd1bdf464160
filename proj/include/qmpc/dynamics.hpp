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

#include <optional>
#include <vector>

namespace qmpc {

/// Continuous-time generator of density-matrix evolution under row-major
/// vectorization, kept in both complex (N² × N²) and real-embedded (2N² × 2N²)
/// form. Immutable after construction.
class Liouvillian {
 public:
  Eigen::Index dim() const { return dim_; }
  Eigen::Index num_controls() const { return static_cast<Eigen::Index>(control_.size()); }
  /// Real state length 2N².
  Eigen::Index state_size() const { return 2 * dim_ * dim_; }
  bool dissipative() const { return dissipative_; }

  const ComplexMatrix& drift() const { return drift_; }
  const std::vector<ComplexMatrix>& controls() const { return control_; }
  const RealMatrix& drift_real() const { return drift_real_; }
  const std::vector<RealMatrix>& controls_real() const { return control_real_; }

  const ComplexMatrix& drift_hamiltonian() const { return h0_; }
  const std::vector<ComplexMatrix>& control_hamiltonians() const { return hc_; }

  /// Complex generator for a fixed control vector u: drift + Σ u_j control_j.
  ComplexMatrix generator(const RealVector& u) const;

 private:
  friend Liouvillian build_liouvillian(const ComplexMatrix&, const std::vector<ComplexMatrix>&,
                                       const std::optional<ComplexMatrix>&,
                                       const std::vector<ComplexMatrix>&);
  Liouvillian() = default;

  Eigen::Index dim_ = 0;
  bool dissipative_ = false;
  ComplexMatrix h0_;
  std::vector<ComplexMatrix> hc_;
  ComplexMatrix drift_;
  std::vector<ComplexMatrix> control_;
  RealMatrix drift_real_;
  std::vector<RealMatrix> control_real_;
};

/// Superoperator of ρ ↦ −i[H, ρ] under row-major vectorization: −i(H ⊗ I − I ⊗ Hᵀ).
ComplexMatrix commutator_superoperator(const ComplexMatrix& h);

/// Assemble drift −i[H0, ·] plus the optional dissipator
/// Σ c_jk (D_j ρ D_k† − ½{D_k† D_j, ρ}) and control generators −i[H_j, ·].
///
/// Throws std::invalid_argument for non-Hermitian Hamiltonians, a non-PSD
/// coefficient matrix, or inconsistent dimensions.
Liouvillian build_liouvillian(const ComplexMatrix& h0, const std::vector<ComplexMatrix>& hc,
                              const std::optional<ComplexMatrix>& coeffs = std::nullopt,
                              const std::vector<ComplexMatrix>& dissipators = {});

/// Discrete-time control model
///   x(t+1) = A x(t) + B u(t) + Σ_j u_j(t) N_j x(t).
/// Quantum models have B = 0; purely linear models have every N_j = 0.
struct BilinearModel {
  RealMatrix drift;                     // A
  RealMatrix input;                     // B, n_x × m (may be all zero)
  std::vector<RealMatrix> bilinear;     // N_j
  double dt = 0.0;
  /// Order K of the step x ↦ Σ_{k≤K} M^k x / k! with M = (A − I) + Σ_j u_j N_j,
  /// a truncated exponential of the generator. K = 1 is the map above; K > 1
  /// requires B = 0.
  int order = 1;

  Eigen::Index state_size() const { return drift.rows(); }
  Eigen::Index num_controls() const { return input.cols(); }
  bool is_linear() const;
  RealVector step(const RealVector& x, const RealVector& u) const;
};

/// Purely linear model x ↦ A x + B u (no bilinear terms).
BilinearModel make_linear_model(RealMatrix a, RealMatrix b, double dt = 1.0);

/// A = I + dt·L_drift, N_j = dt·L_control_j (zero-order hold on u).
BilinearModel discretize_first_order(const Liouvillian& l, double dt);
/// Same A and N_j with the step taken to Taylor order `order`.
BilinearModel discretize(const Liouvillian& l, double dt, int order);

/// Independent subsystems side by side: block-diagonal drift, controls concatenated.
BilinearModel block_diagonal(const std::vector<BilinearModel>& parts);

/// Exact propagation of ρ over dt with piecewise-constant control. The result is
/// re-Hermitized and renormalized; the step is subdivided until the trace drift
/// of each substep is below 1e-10.
QuantumState step_truth(const Liouvillian& l, const QuantumState& rho, const RealVector& u,
                        double dt);

/// Matrix exponential (scaling and squaring with Padé approximant).
ComplexMatrix expm(const ComplexMatrix& m);

/// Per-step Jacobians and defects of the model about a guess trajectory.
struct LinearizedDynamics {
  std::vector<RealMatrix> a;         // ∂f/∂x at (x_guess(t), u_guess(t))
  std::vector<RealMatrix> b;         // ∂f/∂u
  std::vector<RealVector> residual;  // r(t+1) = f(x_guess(t), u_guess(t)) − x_guess(t+1)
  std::vector<RealVector> x_guess;   // T+1 states
  std::vector<RealVector> u_guess;   // T controls

  Eigen::Index horizon() const { return static_cast<Eigen::Index>(a.size()); }
  /// Constant term c(t) in x(t+1) = A(t) x(t) + B(t) u(t) + c(t).
  RealVector affine_offset(Eigen::Index t) const;
};

LinearizedDynamics linearize(const BilinearModel& model, const std::vector<RealVector>& x_guess,
                             const std::vector<RealVector>& u_guess);

/// Generator for the vectorized process P = |U⟩⟩⟨⟨U| with Hamiltonians H ⊗ I.
/// Closed systems only.
Liouvillian lift_to_process(const Liouvillian& l);
BilinearModel lift_to_process_model(const Liouvillian& l, double dt);

/// Normalized process state |U⟩⟩⟨⟨U| / N for a unitary U.
QuantumState process_state(const ComplexMatrix& unitary);

}  // namespace qmpc
