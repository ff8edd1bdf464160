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

#include "qmpc/qcore.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace qmpc {

bool is_hermitian(const ComplexMatrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

ComplexVector vectorize(const ComplexMatrix& rho) {
  ComplexVector v(rho.size());
  for (Eigen::Index i = 0; i < rho.rows(); ++i) {
    for (Eigen::Index j = 0; j < rho.cols(); ++j) v(i * rho.cols() + j) = rho(i, j);
  }
  return v;
}

ComplexMatrix devectorize(const ComplexVector& v, Eigen::Index dim) {
  if (dim <= 0 || v.size() != dim * dim) {
    std::ostringstream msg;
    msg << "devectorize: vector of length " << v.size() << " is not " << dim << "x" << dim;
    throw std::invalid_argument(msg.str());
  }
  ComplexMatrix m(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) m(i, j) = v(i * dim + j);
  }
  return m;
}

RealMatrix real_embed(const ComplexMatrix& m) {
  RealMatrix out(2 * m.rows(), 2 * m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double a = m(i, j).real();
      const double b = m(i, j).imag();
      out(2 * i, 2 * j) = a;
      out(2 * i, 2 * j + 1) = -b;
      out(2 * i + 1, 2 * j) = b;
      out(2 * i + 1, 2 * j + 1) = a;
    }
  }
  return out;
}

RealVector real_embed_vec(const ComplexVector& v) {
  RealVector x(2 * v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    x(2 * i) = v(i).real();
    x(2 * i + 1) = v(i).imag();
  }
  return x;
}

ComplexVector real_unembed_vec(const RealVector& x) {
  if (x.size() % 2 != 0) throw std::invalid_argument("real_unembed_vec: odd length");
  ComplexVector v(x.size() / 2);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = Complex(x(2 * i), x(2 * i + 1));
  return v;
}

ComplexMatrix partial_trace(const ComplexMatrix& rho_ab, Eigen::Index dim_a, Eigen::Index dim_b,
                            Subsystem keep) {
  if (dim_a <= 0 || dim_b <= 0 || rho_ab.rows() != dim_a * dim_b ||
      rho_ab.cols() != dim_a * dim_b) {
    std::ostringstream msg;
    msg << "partial_trace: dims (" << dim_a << ", " << dim_b << ") inconsistent with "
        << rho_ab.rows() << "x" << rho_ab.cols() << " matrix";
    throw std::invalid_argument(msg.str());
  }
  if (keep == Subsystem::A) {
    ComplexMatrix out = ComplexMatrix::Zero(dim_a, dim_a);
    for (Eigen::Index i = 0; i < dim_a; ++i) {
      for (Eigen::Index j = 0; j < dim_a; ++j) {
        for (Eigen::Index k = 0; k < dim_b; ++k) out(i, j) += rho_ab(i * dim_b + k, j * dim_b + k);
      }
    }
    return out;
  }
  ComplexMatrix out = ComplexMatrix::Zero(dim_b, dim_b);
  for (Eigen::Index i = 0; i < dim_b; ++i) {
    for (Eigen::Index j = 0; j < dim_b; ++j) {
      for (Eigen::Index k = 0; k < dim_a; ++k) out(i, j) += rho_ab(k * dim_b + i, k * dim_b + j);
    }
  }
  return out;
}

QuantumState::QuantumState(ComplexMatrix rho) : rho_(std::move(rho)) {
  if (rho_.rows() == 0 || rho_.rows() != rho_.cols()) {
    throw std::invalid_argument("QuantumState: density matrix must be square and nonempty");
  }
  const Complex tr = rho_.trace();
  if (std::abs(tr - Complex(1.0, 0.0)) > kTraceTol) {
    std::ostringstream msg;
    msg << "QuantumState: trace " << tr << " differs from 1";
    throw std::invalid_argument(msg.str());
  }
  if (!is_hermitian(rho_, kHermitianTol)) {
    throw std::invalid_argument("QuantumState: density matrix is not Hermitian");
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(rho_, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -kPsdTol) {
    std::ostringstream msg;
    msg << "QuantumState: negative eigenvalue " << es.eigenvalues().minCoeff();
    throw std::invalid_argument(msg.str());
  }
}

QuantumState QuantumState::pure(const ComplexVector& ket) {
  const double norm = ket.norm();
  if (norm == 0.0) throw std::invalid_argument("QuantumState::pure: zero ket");
  const ComplexVector psi = ket / norm;
  return QuantumState(psi * psi.adjoint());
}

QuantumState QuantumState::basis(Eigen::Index dim, Eigen::Index level) {
  if (level < 0 || level >= dim) throw std::invalid_argument("QuantumState::basis: bad level");
  ComplexMatrix rho = ComplexMatrix::Zero(dim, dim);
  rho(level, level) = 1.0;
  return QuantumState(std::move(rho));
}

QuantumState QuantumState::from_real(const RealVector& x, Eigen::Index dim) {
  return QuantumState(devectorize(real_unembed_vec(x), dim));
}

RealVector QuantumState::to_real() const { return real_embed_vec(vectorize(rho_)); }

bool QuantumState::is_pure(double tol) const {
  return std::abs((rho_ * rho_).trace().real() - 1.0) <= tol;
}

ComplexMatrix hermitian_sqrt(const ComplexMatrix& m) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(m);
  const RealVector roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
}

double fidelity(const QuantumState& rho, const QuantumState& rho_ref) {
  if (rho.dim() != rho_ref.dim()) throw std::invalid_argument("fidelity: dimension mismatch");
  double f = 0.0;
  if (rho_ref.is_pure() || rho.is_pure()) {
    f = (rho.rho() * rho_ref.rho()).trace().real();
  } else {
    const ComplexMatrix s = hermitian_sqrt(rho.rho());
    const ComplexMatrix inner = s * rho_ref.rho() * s;
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (inner + inner.adjoint()),
                                                    Eigen::EigenvaluesOnly);
    const double tr = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    f = tr * tr;
  }
  return std::clamp(f, 0.0, 1.0);
}

std::pair<double, double> state_norm_identity_check(const QuantumState& rho,
                                                     const QuantumState& rho_ref) {
  const double lhs = 0.5 * (rho.to_real() - rho_ref.to_real()).squaredNorm();
  const double rhs = 1.0 - fidelity(rho, rho_ref);
  return {lhs, rhs};
}

OperatorKind parse_operator_kind(std::string_view name) {
  if (name == "pauli_x") return OperatorKind::PauliX;
  if (name == "pauli_y") return OperatorKind::PauliY;
  if (name == "pauli_z") return OperatorKind::PauliZ;
  if (name == "lower") return OperatorKind::Lower;
  if (name == "raise") return OperatorKind::Raise;
  if (name == "projector") return OperatorKind::Projector;
  if (name == "identity") return OperatorKind::Identity;
  throw std::invalid_argument("unknown operator kind '" + std::string(name) + "'");
}

ComplexMatrix standard_operator(OperatorKind kind, Eigen::Index dim, Eigen::Index row,
                                Eigen::Index col) {
  if (dim < 2) throw std::invalid_argument("standard_operator: dim must be >= 2");
  ComplexMatrix m = ComplexMatrix::Zero(dim, dim);
  const Complex i(0.0, 1.0);
  switch (kind) {
    case OperatorKind::PauliX:
      m(0, 1) = 1.0;
      m(1, 0) = 1.0;
      break;
    case OperatorKind::PauliY:
      m(0, 1) = -i;
      m(1, 0) = i;
      break;
    case OperatorKind::PauliZ:
      m(0, 0) = 1.0;
      m(1, 1) = -1.0;
      break;
    case OperatorKind::Lower:
      for (Eigen::Index n = 1; n < dim; ++n) m(n - 1, n) = std::sqrt(static_cast<double>(n));
      break;
    case OperatorKind::Raise:
      for (Eigen::Index n = 1; n < dim; ++n) m(n, n - 1) = std::sqrt(static_cast<double>(n));
      break;
    case OperatorKind::Projector:
      if (row < 0 || row >= dim || col < 0 || col >= dim) {
        throw std::invalid_argument("standard_operator: projector index out of range");
      }
      m(row, col) = 1.0;
      break;
    case OperatorKind::Identity:
      m.setIdentity();
      break;
  }
  return m;
}

}  // namespace qmpc
