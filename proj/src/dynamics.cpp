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

#include "qmpc/dynamics.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace qmpc {
namespace {

void require_square(const ComplexMatrix& m, Eigen::Index dim, const char* what) {
  if (m.rows() != dim || m.cols() != dim) {
    std::ostringstream msg;
    msg << "build_liouvillian: " << what << " is " << m.rows() << "x" << m.cols() << ", expected "
        << dim << "x" << dim;
    throw std::invalid_argument(msg.str());
  }
}

Complex vec_trace(const ComplexVector& v, Eigen::Index dim) {
  Complex tr = 0.0;
  for (Eigen::Index i = 0; i < dim; ++i) tr += v(i * dim + i);
  return tr;
}

}  // namespace

ComplexMatrix Liouvillian::generator(const RealVector& u) const {
  if (u.size() != num_controls()) throw std::invalid_argument("Liouvillian: control size mismatch");
  ComplexMatrix g = drift_;
  for (Eigen::Index j = 0; j < u.size(); ++j) g += u(j) * control_[j];
  return g;
}

ComplexMatrix commutator_superoperator(const ComplexMatrix& h) {
  const ComplexMatrix id = ComplexMatrix::Identity(h.rows(), h.cols());
  return Complex(0.0, -1.0) * (kron(h, id) - kron(id, h.transpose()));
}

Liouvillian build_liouvillian(const ComplexMatrix& h0, const std::vector<ComplexMatrix>& hc,
                              const std::optional<ComplexMatrix>& coeffs,
                              const std::vector<ComplexMatrix>& dissipators) {
  const Eigen::Index n = h0.rows();
  if (n == 0) throw std::invalid_argument("build_liouvillian: empty drift Hamiltonian");
  require_square(h0, n, "drift Hamiltonian");
  if (!is_hermitian(h0)) throw std::invalid_argument("build_liouvillian: H0 is not Hermitian");
  for (const auto& h : hc) {
    require_square(h, n, "control Hamiltonian");
    if (!is_hermitian(h)) {
      throw std::invalid_argument("build_liouvillian: control Hamiltonian is not Hermitian");
    }
  }

  Liouvillian l;
  l.dim_ = n;
  l.h0_ = h0;
  l.hc_ = hc;
  l.drift_ = commutator_superoperator(h0);

  if (coeffs.has_value() && !dissipators.empty()) {
    const ComplexMatrix& c = *coeffs;
    const auto k = static_cast<Eigen::Index>(dissipators.size());
    if (c.rows() != k || c.cols() != k) {
      throw std::invalid_argument("build_liouvillian: coefficient matrix must be KxK for K dissipators");
    }
    if (!is_hermitian(c)) throw std::invalid_argument("build_liouvillian: C is not Hermitian");
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(c, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kPsdTol) {
      throw std::invalid_argument("build_liouvillian: dissipator coefficients are not PSD");
    }
    for (const auto& d : dissipators) {
      require_square(d, n, "dissipator");
      if (std::abs(d.trace()) > kTraceTol) {
        throw std::invalid_argument("build_liouvillian: dissipator is not trace-zero");
      }
    }
    const ComplexMatrix id = ComplexMatrix::Identity(n, n);
    for (Eigen::Index j = 0; j < k; ++j) {
      for (Eigen::Index m = 0; m < k; ++m) {
        if (c(j, m) == Complex(0.0, 0.0)) continue;
        const ComplexMatrix& dj = dissipators[j];
        const ComplexMatrix dk_dag = dissipators[m].adjoint();
        const ComplexMatrix anti = dk_dag * dj;
        // D_j ρ D_k† -> D_j ⊗ (D_k†)ᵀ ; M ρ -> M ⊗ I ; ρ M -> I ⊗ Mᵀ
        l.drift_ += c(j, m) * (kron(dj, dk_dag.transpose()) - 0.5 * kron(anti, id) -
                               0.5 * kron(id, anti.transpose()));
      }
    }
    l.dissipative_ = c.cwiseAbs().maxCoeff() > 0.0;
  }

  for (const auto& h : hc) l.control_.push_back(commutator_superoperator(h));
  l.drift_real_ = real_embed(l.drift_);
  for (const auto& g : l.control_) l.control_real_.push_back(real_embed(g));
  return l;
}

bool BilinearModel::is_linear() const {
  for (const auto& n : bilinear) {
    if (n.size() > 0 && n.cwiseAbs().maxCoeff() > 0.0) return false;
  }
  return true;
}

namespace {

RealMatrix step_generator(const BilinearModel& m, const RealVector& u) {
  RealMatrix g = m.drift - RealMatrix::Identity(m.state_size(), m.state_size());
  for (std::size_t j = 0; j < m.bilinear.size(); ++j) {
    g += u(static_cast<Eigen::Index>(j)) * m.bilinear[j];
  }
  return g;
}

}  // namespace

RealVector BilinearModel::step(const RealVector& x, const RealVector& u) const {
  if (x.size() != state_size() || u.size() != num_controls()) {
    throw std::invalid_argument("BilinearModel::step: dimension mismatch");
  }
  if (order > 1) {
    const RealMatrix g = step_generator(*this, u);
    RealVector term = x;
    RealVector next = x;
    for (int k = 1; k <= order; ++k) {
      term = g * term / static_cast<double>(k);
      next += term;
    }
    return next + input * u;
  }
  RealVector next = drift * x + input * u;
  for (std::size_t j = 0; j < bilinear.size(); ++j) {
    if (u(static_cast<Eigen::Index>(j)) != 0.0) {
      next += u(static_cast<Eigen::Index>(j)) * (bilinear[j] * x);
    }
  }
  return next;
}

BilinearModel make_linear_model(RealMatrix a, RealMatrix b, double dt) {
  if (a.rows() != a.cols() || b.rows() != a.rows()) {
    throw std::invalid_argument("make_linear_model: dimension mismatch");
  }
  BilinearModel m;
  m.dt = dt;
  m.bilinear.assign(static_cast<std::size_t>(b.cols()), RealMatrix::Zero(a.rows(), a.cols()));
  m.drift = std::move(a);
  m.input = std::move(b);
  return m;
}

BilinearModel discretize_first_order(const Liouvillian& l, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("discretize_first_order: dt must be positive");
  const Eigen::Index n = l.state_size();
  BilinearModel m;
  m.dt = dt;
  m.drift = RealMatrix::Identity(n, n) + dt * l.drift_real();
  m.input = RealMatrix::Zero(n, l.num_controls());
  for (const auto& g : l.controls_real()) m.bilinear.push_back(dt * g);
  return m;
}

BilinearModel discretize(const Liouvillian& l, double dt, int order) {
  if (order < 1) throw std::invalid_argument("discretize: order must be >= 1");
  BilinearModel m = discretize_first_order(l, dt);
  m.order = order;
  return m;
}

BilinearModel block_diagonal(const std::vector<BilinearModel>& parts) {
  if (parts.empty()) throw std::invalid_argument("block_diagonal: no parts");
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  for (const auto& p : parts) {
    n += p.state_size();
    m += p.num_controls();
    if (p.dt != parts.front().dt) throw std::invalid_argument("block_diagonal: dt mismatch");
    if (p.order != parts.front().order) throw std::invalid_argument("block_diagonal: order mismatch");
  }
  BilinearModel out;
  out.dt = parts.front().dt;
  out.order = parts.front().order;
  out.drift = RealMatrix::Zero(n, n);
  out.input = RealMatrix::Zero(n, m);
  out.bilinear.assign(static_cast<std::size_t>(m), RealMatrix::Zero(n, n));
  Eigen::Index off_x = 0;
  Eigen::Index off_u = 0;
  for (const auto& p : parts) {
    const Eigen::Index px = p.state_size();
    out.drift.block(off_x, off_x, px, px) = p.drift;
    out.input.block(off_x, off_u, px, p.num_controls()) = p.input;
    for (Eigen::Index j = 0; j < p.num_controls(); ++j) {
      out.bilinear[static_cast<std::size_t>(off_u + j)].block(off_x, off_x, px, px) =
          p.bilinear[static_cast<std::size_t>(j)];
    }
    off_x += px;
    off_u += p.num_controls();
  }
  return out;
}

ComplexMatrix expm(const ComplexMatrix& m) { return m.exp(); }

QuantumState step_truth(const Liouvillian& l, const QuantumState& rho, const RealVector& u,
                        double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_truth: dt must be positive");
  if (rho.dim() != l.dim()) throw std::invalid_argument("step_truth: state dimension mismatch");
  if (!u.allFinite()) throw std::invalid_argument("step_truth: non-finite control");
  const Eigen::Index n = l.dim();
  const ComplexMatrix g = l.generator(u);
  const ComplexVector v0 = vectorize(rho.rho());

  ComplexVector v = v0;
  constexpr int kMaxHalvings = 12;
  for (int halvings = 0; halvings <= kMaxHalvings; ++halvings) {
    const long substeps = 1L << halvings;
    const ComplexMatrix prop = expm(g * (dt / static_cast<double>(substeps)));
    v = v0;
    double worst_drift = 0.0;
    for (long s = 0; s < substeps; ++s) {
      const Complex before = vec_trace(v, n);
      v = prop * v;
      worst_drift = std::max(worst_drift, std::abs(vec_trace(v, n) - before));
    }
    if (worst_drift < 1e-10) break;
  }
  ComplexMatrix out = devectorize(v, n);
  out = 0.5 * (out + out.adjoint());
  out /= out.trace().real();
  return QuantumState(std::move(out));
}

RealVector LinearizedDynamics::affine_offset(Eigen::Index t) const {
  const auto i = static_cast<std::size_t>(t);
  return x_guess[i + 1] + residual[i] - a[i] * x_guess[i] - b[i] * u_guess[i];
}

LinearizedDynamics linearize(const BilinearModel& model, const std::vector<RealVector>& x_guess,
                             const std::vector<RealVector>& u_guess) {
  if (x_guess.size() != u_guess.size() + 1) {
    std::ostringstream msg;
    msg << "linearize: expected T+1 states for T controls, got " << x_guess.size() << " and "
        << u_guess.size();
    throw std::invalid_argument(msg.str());
  }
  LinearizedDynamics lin;
  lin.x_guess = x_guess;
  lin.u_guess = u_guess;
  const Eigen::Index nx = model.state_size();
  const Eigen::Index nu = model.num_controls();
  for (std::size_t t = 0; t < u_guess.size(); ++t) {
    const RealVector& x = x_guess[t];
    const RealVector& u = u_guess[t];
    if (x.size() != nx || u.size() != nu || x_guess[t + 1].size() != nx) {
      throw std::invalid_argument("linearize: guess dimension mismatch");
    }
    RealMatrix a = model.drift;
    RealMatrix b = model.input;
    if (model.order > 1) {
      // powers[k] = M^k; d(M^k x)/du_j = Σ_i M^i N_j M^(k-1-i) x.
      const RealMatrix g = step_generator(model, u);
      std::vector<RealMatrix> powers{RealMatrix::Identity(nx, nx)};
      std::vector<RealVector> px{x};
      for (int k = 1; k <= model.order; ++k) {
        powers.push_back(g * powers.back());
        px.push_back(g * px.back());
      }
      a = RealMatrix::Identity(nx, nx);
      double fact = 1.0;
      for (int k = 1; k <= model.order; ++k) {
        fact *= k;
        a += powers[static_cast<std::size_t>(k)] / fact;
      }
      for (Eigen::Index j = 0; j < nu; ++j) {
        const RealMatrix& nj = model.bilinear[static_cast<std::size_t>(j)];
        fact = 1.0;
        for (int k = 1; k <= model.order; ++k) {
          fact *= k;
          RealVector d = RealVector::Zero(nx);
          for (int i = 0; i < k; ++i) {
            d += powers[static_cast<std::size_t>(i)] * (nj * px[static_cast<std::size_t>(k - 1 - i)]);
          }
          b.col(j) += d / fact;
        }
      }
    } else {
      for (Eigen::Index j = 0; j < nu; ++j) {
        const RealMatrix& nj = model.bilinear[static_cast<std::size_t>(j)];
        a += u(j) * nj;
        b.col(j) += nj * x;
      }
    }
    lin.residual.push_back(model.step(x, u) - x_guess[t + 1]);
    lin.a.push_back(std::move(a));
    lin.b.push_back(std::move(b));
  }
  return lin;
}

Liouvillian lift_to_process(const Liouvillian& l) {
  if (l.dissipative()) {
    throw std::invalid_argument("lift_to_process: requires a closed system (no dissipator)");
  }
  const Eigen::Index n = l.dim();
  const ComplexMatrix id = ComplexMatrix::Identity(n, n);
  std::vector<ComplexMatrix> hc;
  for (const auto& h : l.control_hamiltonians()) hc.push_back(kron(h, id));
  return build_liouvillian(kron(l.drift_hamiltonian(), id), hc);
}

BilinearModel lift_to_process_model(const Liouvillian& l, double dt) {
  return discretize_first_order(lift_to_process(l), dt);
}

QuantumState process_state(const ComplexMatrix& unitary) {
  const ComplexVector ket = vectorize(unitary);
  return QuantumState::pure(ket);
}

}  // namespace qmpc
