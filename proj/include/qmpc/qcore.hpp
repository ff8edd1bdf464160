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

#include <Eigen/Dense>

#include <complex>
#include <string_view>
#include <utility>

namespace qmpc {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

/// Numerical slack used when validating density matrices.
inline constexpr double kTraceTol = 1e-9;
inline constexpr double kHermitianTol = 1e-9;
inline constexpr double kPsdTol = 1e-9;

bool is_hermitian(const ComplexMatrix& m, double tol = kHermitianTol);

/// Kronecker product a ⊗ b (standard ordering: index (i, j) -> i * dim(b) + j).
ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b);

/// Row-major stacking: [[r00, r01], [r10, r11]] -> (r00, r01, r10, r11).
ComplexVector vectorize(const ComplexMatrix& rho);
ComplexMatrix devectorize(const ComplexVector& v, Eigen::Index dim);

/// Each entry a + bi becomes the block [[a, -b], [b, a]].
RealMatrix real_embed(const ComplexMatrix& m);
/// First column of the block map: a + bi -> (a, b), interleaved per entry.
RealVector real_embed_vec(const ComplexVector& v);
ComplexVector real_unembed_vec(const RealVector& x);

enum class Subsystem { A, B };

ComplexMatrix partial_trace(const ComplexMatrix& rho_ab, Eigen::Index dim_a, Eigen::Index dim_b,
                            Subsystem keep);

/// A validated density matrix: unit trace, Hermitian, positive semidefinite.
///
/// The vectorized real form `x = real_embed_vec(vectorize(rho))` is the MPC
/// state; it is computed on demand.
class QuantumState {
 public:
  explicit QuantumState(ComplexMatrix rho);

  static QuantumState pure(const ComplexVector& ket);
  static QuantumState basis(Eigen::Index dim, Eigen::Index level);
  /// Rebuild from the vectorized real form; validates like the constructor.
  static QuantumState from_real(const RealVector& x, Eigen::Index dim);

  Eigen::Index dim() const { return rho_.rows(); }
  const ComplexMatrix& rho() const { return rho_; }
  RealVector to_real() const;
  bool is_pure(double tol = kPsdTol) const;

 private:
  ComplexMatrix rho_;
};

/// Squared (Uhlmann) fidelity. Uses Tr{rho rho_ref} when either argument is
/// pure, otherwise matrix square roots via Hermitian eigendecomposition.
double fidelity(const QuantumState& rho, const QuantumState& rho_ref);

/// Both sides of ½‖x − x_ref‖² = 1 − F for pure states, evaluated independently.
std::pair<double, double> state_norm_identity_check(const QuantumState& rho,
                                                     const QuantumState& rho_ref);

enum class OperatorKind { PauliX, PauliY, PauliZ, Lower, Raise, Projector, Identity };

OperatorKind parse_operator_kind(std::string_view name);

/// Pauli operators act on the lowest two levels when dim > 2. `Projector`
/// builds |row><col|; the indices are ignored for the other kinds.
ComplexMatrix standard_operator(OperatorKind kind, Eigen::Index dim, Eigen::Index row = 0,
                                Eigen::Index col = 0);

/// Hermitian square root with eigenvalues clamped at zero.
ComplexMatrix hermitian_sqrt(const ComplexMatrix& m);

}  // namespace qmpc
