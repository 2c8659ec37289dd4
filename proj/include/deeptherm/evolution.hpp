// Copyright 2026 The deeptherm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "deeptherm/common.hpp"
#include "deeptherm/lattice.hpp"
#include "deeptherm/noise.hpp"
#include "deeptherm/state.hpp"

/**
 * Time evolution under the sparse XY Hamiltonian.
 *
 * Three interchangeable propagators for psi(t) = exp(-i H t) psi(0):
 *  - Krylov (default): restarted Lanczos, adaptive substeps of at most
 *    ~8 radians of ||H|| t, per-substep Saad residual estimate.
 *  - Chebyshev: polynomial expansion with Bessel coefficients on the
 *    Gershgorin interval [-R, R] (the diagonal is zero, so no shift).
 *  - Dense eigendecomposition: exact within fp, guarded to dim <= 4096;
 *    the oracle the iterative methods are tested against.
 *
 * Dephasing runs use Strang splitting on the noise grid:
 *    psi <- D(xi_k, dt/2) U_H(dt) D(xi_k, dt/2) psi
 * with D the diagonal phase exp(-i dt/2 * (1/2) sum_j xi_j sigma_j^z) and
 * xi sampled at step midpoints (piecewise-constant noise).  Adjacent
 * diagonal half-steps are fused into one apply; the math is unchanged.
 */
namespace deeptherm {

enum class EvolveMethod { kKrylov, kChebyshev, kDenseEig };

struct EvolutionConfig {
  EvolveMethod method = EvolveMethod::kKrylov;
  /// Maximum Lanczos basis size per substep.
  int krylov_dim = 30;
  /// Total truncation budget for one evolve() call (norm of the error).
  double tolerance = 1.0e-12;
  /// Splitting step for noisy evolution, seconds.
  double trotter_dt = 0.1 * kSecPerNs;
};

namespace detail {

/// Substep size in radians of ||H|| * tau for the Krylov propagator.
inline constexpr double kKrylovStepRadians = 8.0;
/// Chebyshev chunk size in radians (series length ~ z + O(z^(1/3))).
inline constexpr double kChebyshevChunkRadians = 50.0;

struct KrylovWorkspace {
  Eigen::MatrixXcd basis;   // dim x m_max Lanczos vectors
  Eigen::VectorXcd w;       // scratch
  Eigen::VectorXd alpha;    // m_max diagonal
  Eigen::VectorXd beta;     // m_max offdiagonal (beta[i] couples i, i+1)

  void resize(std::size_t dim, int m_max) {
    basis.resize(static_cast<Eigen::Index>(dim), m_max);
    w.resize(static_cast<Eigen::Index>(dim));
    alpha.resize(m_max);
    beta.resize(m_max);
  }
};

/**
 * One restarted-Lanczos propagation psi <- exp(-i H t) psi.  Subdivides
 * adaptively; each substep spends at most budget tol * |tau| / |t|.
 * Returns the number of substeps taken (diagnostic).
 */
inline int krylov_propagate(const SparseHamiltonian& h, Eigen::VectorXcd& psi,
                            double t, int m_max, double tol,
                            KrylovWorkspace& ws) {
  if (t == 0.0) return 0;
  const double r_bound = h.norm_bound();
  if (r_bound == 0.0) return 0;  // H = 0: exp is the identity
  const std::size_t dim = h.dimension();
  m_max = std::max(2, std::min<int>(m_max, static_cast<int>(dim)));
  ws.resize(dim, m_max);

  const double total = std::abs(t);
  const double direction = t > 0.0 ? 1.0 : -1.0;
  const double breakdown = 1.0e-14 * r_bound;
  double done = 0.0;
  double tau = std::min(total, kKrylovStepRadians / r_bound);
  int steps = 0;

  while (done < total * (1.0 - 1e-15)) {
    tau = std::min(tau, total - done);

    const double norm0 = psi.norm();
    if (!(norm0 > 0.0))
      throw NumericalError("krylov_propagate: zero-norm state");
    ws.basis.col(0) = psi / norm0;

    // Lanczos three-term recurrence with one reorthogonalization against
    // the previous two vectors (real symmetric H => real alpha/beta).
    int m = m_max;
    for (int j = 0; j < m_max; ++j) {
      h.apply(ws.basis.col(j).data(), ws.w.data());
      if (j > 0) ws.w -= ws.beta[j - 1] * ws.basis.col(j - 1);
      const cd aj = ws.basis.col(j).dot(ws.w);
      ws.alpha[j] = aj.real();
      ws.w -= ws.alpha[j] * ws.basis.col(j);
      // Local reorthogonalization pass.
      if (j > 0) ws.w -= ws.basis.col(j - 1).dot(ws.w) * ws.basis.col(j - 1);
      ws.w -= ws.basis.col(j).dot(ws.w) * ws.basis.col(j);
      const double bj = ws.w.norm();
      ws.beta[j] = bj;
      if (bj <= breakdown) {
        m = j + 1;  // happy breakdown: Krylov space is invariant
        break;
      }
      if (j + 1 < m_max) ws.basis.col(j + 1) = ws.w / bj;
    }

    Eigen::MatrixXd tmat = Eigen::MatrixXd::Zero(m, m);
    for (int j = 0; j < m; ++j) {
      tmat(j, j) = ws.alpha[j];
      if (j + 1 < m) tmat(j, j + 1) = tmat(j + 1, j) = ws.beta[j];
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(tmat);
    if (eig.info() != Eigen::Success)
      throw NumericalError("krylov_propagate: tridiagonal eigensolve failed");
    const double residual_scale = (m < m_max) ? 0.0 : ws.beta[m - 1];

    // Shrink tau until the Saad residual estimate fits this substep's
    // share of the total budget.
    Eigen::VectorXcd small;
    int halvings = 0;
    for (;;) {
      const Eigen::VectorXd proj0 = eig.eigenvectors().row(0);
      Eigen::VectorXcd phases(m);
      for (int j = 0; j < m; ++j)
        phases[j] = std::polar(1.0, -direction * tau * eig.eigenvalues()[j]) *
                    proj0[j];
      small = eig.eigenvectors() * phases;
      const double err = residual_scale * std::abs(small[m - 1]) * tau;
      const double budget = tol * std::max(tau / total, 1e-16);
      if (err <= budget || residual_scale == 0.0) break;
      tau *= 0.5;
      if (++halvings > 60)
        throw NumericalError(
            "krylov_propagate: residual " + format_double(err) +
            " will not meet tolerance " + format_double(budget) +
            "; Krylov dimension too small for this Hamiltonian");
    }

    psi = ws.basis.leftCols(m) * (norm0 * small);
    done += tau;
    ++steps;
    if (halvings == 0) tau *= 1.25;  // mild growth; clamped at loop head
  }
  return steps;
}

/// psi <- exp(-i H t) psi by Chebyshev expansion.
inline void chebyshev_propagate(const SparseHamiltonian& h,
                                Eigen::VectorXcd& psi, double t, double tol) {
  if (t == 0.0) return;
  const double r_bound = h.norm_bound() * (1.0 + 1e-12);
  if (r_bound == 0.0) return;
  const double total = std::abs(t);
  const double direction = t > 0.0 ? 1.0 : -1.0;
  const int n_chunks = std::max(
      1, static_cast<int>(std::ceil(r_bound * total / kChebyshevChunkRadians)));
  const double tau = total / n_chunks;
  const double z = r_bound * tau;
  const double coeff_floor =
      std::max(tol / n_chunks, 1.0e-16) / std::max(z, 1.0);

  const std::size_t dim = h.dimension();
  Eigen::VectorXcd tk0(static_cast<Eigen::Index>(dim));
  Eigen::VectorXcd tk1(static_cast<Eigen::Index>(dim));
  Eigen::VectorXcd tk2(static_cast<Eigen::Index>(dim));
  Eigen::VectorXcd acc(static_cast<Eigen::Index>(dim));

  // (-i * direction)^k cycles with period 4.
  const cd unit_powers[4] = {cd{1.0, 0.0}, cd{0.0, -direction},
                             cd{-1.0, 0.0}, cd{0.0, direction}};

  for (int chunk = 0; chunk < n_chunks; ++chunk) {
    tk0 = psi;
    h.apply(tk0.data(), tk1.data());
    tk1 /= r_bound;
    acc = std::cyl_bessel_j(0, z) * tk0 +
          2.0 * std::cyl_bessel_j(1, z) * unit_powers[1] * tk1;
    const int k_guard = static_cast<int>(z) + 2000;
    bool converged = false;
    for (int k = 2; k <= k_guard; ++k) {
      h.apply(tk1.data(), tk2.data());
      tk2 = 2.0 / r_bound * tk2 - tk0;
      const double ck = 2.0 * std::cyl_bessel_j(k, z);
      acc += ck * unit_powers[k % 4] * tk2;
      tk0.swap(tk1);
      tk1.swap(tk2);
      if (static_cast<double>(k) > z && std::abs(ck) < coeff_floor) {
        converged = true;
        break;
      }
    }
    if (!converged)
      throw NumericalError(
          "chebyshev_propagate: series did not converge within " +
          std::to_string(k_guard) + " terms");
    psi = acc;
  }
}

}  // namespace detail

/// Exact propagator via dense eigendecomposition; oracle for small systems.
[[nodiscard]] inline StateVector evolve_dense(const StateVector& state,
                                const SparseHamiltonian& h, double t) {
  state.check_consistent();
  if (!(state.basis == h.basis()))
    throw ParameterError("evolve_dense: state basis " + state.basis.str() +
                         " does not match Hamiltonian " + h.basis().str());
  if (h.dimension() > 4096)
    throw ParameterError(
        "evolve_dense: dimension > 4096; use Krylov or Chebyshev");
  const Eigen::MatrixXd dense = h.dense();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense);
  if (eig.info() != Eigen::Success)
    throw NumericalError("evolve_dense: eigendecomposition failed");
  const Eigen::VectorXcd coeffs =
      eig.eigenvectors().transpose().cast<cd>() * state.amplitudes;
  Eigen::VectorXcd rotated(coeffs.size());
  for (Eigen::Index i = 0; i < coeffs.size(); ++i)
    rotated[i] = std::polar(1.0, -t * eig.eigenvalues()[i]) * coeffs[i];
  StateVector out;
  out.basis = state.basis;
  out.amplitudes = eig.eigenvectors().cast<cd>() * rotated;
  return out;
}

/// psi(t) = exp(-i H t) psi.  Negative t runs the inverse evolution.
/// Returns the evolved state; the input is untouched.
[[nodiscard]] inline StateVector evolve(const StateVector& state,
                                        const SparseHamiltonian& h, double t,
                                        const EvolutionConfig& cfg = {}) {
  state.check_consistent();
  if (!(state.basis == h.basis()))
    throw ParameterError("evolve: state basis " + state.basis.str() +
                         " does not match Hamiltonian " + h.basis().str());
  if (cfg.krylov_dim < 2)
    throw ParameterError("evolve: krylov_dim must be >= 2");
  if (cfg.tolerance <= 0.0)
    throw ParameterError("evolve: tolerance must be positive");

  switch (cfg.method) {
    case EvolveMethod::kDenseEig:
      return evolve_dense(state, h, t);
    case EvolveMethod::kChebyshev: {
      StateVector out = state;
      detail::chebyshev_propagate(h, out.amplitudes, t, cfg.tolerance);
      return out;
    }
    case EvolveMethod::kKrylov:
    default: {
      StateVector out = state;
      detail::KrylovWorkspace ws;
      detail::krylov_propagate(h, out.amplitudes, t, cfg.krylov_dim,
                               cfg.tolerance, ws);
      return out;
    }
  }
}

namespace detail {

/// Per-basis-state z-signs: signs[r*n_sites + j] = +1 if bit j of state r
/// is 0 (sigma_z eigenvalue +1), else -1.
inline std::vector<std::int8_t> sigma_z_signs(const BasisTag& basis) {
  const int n = basis.n_sites;
  const std::size_t dim = basis.dimension();
  std::vector<std::int8_t> signs(dim * static_cast<std::size_t>(n));
  const auto fill = [&](std::size_t r, std::uint32_t s) {
    for (int j = 0; j < n; ++j)
      signs[r * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)] =
          bit_at(s, j) ? -1 : 1;
  };
  if (basis.is_sector()) {
    const SectorBasis sector(basis.n_sites, basis.excitations);
    for (std::size_t r = 0; r < dim; ++r) fill(r, sector.state(r));
  } else {
    for (std::size_t r = 0; r < dim; ++r)
      fill(r, static_cast<std::uint32_t>(r));
  }
  return signs;
}

/// psi_s *= exp(-i * duration * (1/2) sum_j xi_j z_j(s)).
inline void apply_dephasing_phase(Eigen::VectorXcd& psi,
                                  const std::vector<std::int8_t>& signs,
                                  const double* xi, int n_sites,
                                  double duration) {
  const std::size_t dim = static_cast<std::size_t>(psi.size());
  for (std::size_t r = 0; r < dim; ++r) {
    const std::int8_t* row = signs.data() + r * static_cast<std::size_t>(n_sites);
    double shift = 0.0;
    for (int j = 0; j < n_sites; ++j)
      shift += row[j] > 0 ? xi[j] : -xi[j];
    psi[static_cast<Eigen::Index>(r)] *=
        std::polar(1.0, -0.5 * duration * shift);
  }
}

}  // namespace detail

/**
 * Evolves under H + (1/2) sum_j xi_j(t) sigma_j^z for one sampled noise
 * trajectory, by Strang splitting on the trajectory grid.
 *
 * Preconditions: the trajectory grid step equals cfg.trotter_dt, the
 * trajectory covers the evolved window, and site counts match.  A trailing
 * partial step (t not a multiple of dt) is handled with the final midpoint
 * sample.  `start_segment` resumes a longer trajectory at sample offset
 * start_segment (physical time start_segment * dt), so a state already
 * evolved to that point continues under the same noise realization.
 */
[[nodiscard]] inline StateVector evolve_noisy(const StateVector& state,
                                              const SparseHamiltonian& h,
                                              const NoiseTrajectory& traj,
                                              double t,
                                              const EvolutionConfig& cfg = {},
                                              int start_segment = 0) {
  state.check_consistent();
  if (!(state.basis == h.basis()))
    throw ParameterError("evolve_noisy: state basis does not match H");
  if (t < 0.0) throw ParameterError("evolve_noisy: t must be >= 0");
  if (start_segment < 0)
    throw ParameterError("evolve_noisy: start_segment must be >= 0");
  if (traj.site_count != state.basis.n_sites)
    throw ParameterError("evolve_noisy: trajectory has " +
                         std::to_string(traj.site_count) + " sites, state " +
                         std::to_string(state.basis.n_sites));
  const double dt = cfg.trotter_dt;
  if (dt <= 0.0) throw ParameterError("evolve_noisy: trotter_dt must be > 0");
  if (std::abs(traj.dt - dt) > 1e-12 * dt)
    throw ParameterError(
        "evolve_noisy: noise grid step must equal trotter_dt");
  if (t == 0.0) return state;

  int n_full = static_cast<int>(std::floor(t / dt + 1e-9));
  double tail = t - n_full * dt;
  if (tail < 1e-9 * dt) tail = 0.0;
  if (n_full == 0 && tail == 0.0) return state;
  const int n_segments = n_full + (tail > 0.0 ? 1 : 0);
  if (traj.n_samples() < start_segment + n_segments)
    throw ParameterError("evolve_noisy: trajectory too short for the window");

  const int n_sites = state.basis.n_sites;
  const std::vector<std::int8_t> signs = detail::sigma_z_signs(state.basis);
  std::vector<double> xi(static_cast<std::size_t>(n_sites));
  const auto load_xi = [&](int k) {
    for (int j = 0; j < n_sites; ++j) xi[static_cast<std::size_t>(j)] =
        traj.at(j, start_segment + k);
  };

  StateVector out = state;
  detail::KrylovWorkspace ws;
  const double step_tol = cfg.tolerance / std::max(1, n_segments);
  const auto h_step = [&](double duration) {
    switch (cfg.method) {
      case EvolveMethod::kDenseEig: {
        // Exactness per step; only sensible for small oracles.
        StateVector tmp;
        tmp.basis = out.basis;
        tmp.amplitudes.swap(out.amplitudes);
        tmp = evolve_dense(tmp, h, duration);
        out.amplitudes.swap(tmp.amplitudes);
        break;
      }
      case EvolveMethod::kChebyshev:
        detail::chebyshev_propagate(h, out.amplitudes, duration, step_tol);
        break;
      case EvolveMethod::kKrylov:
      default:
        detail::krylov_propagate(h, out.amplitudes, duration, cfg.krylov_dim,
                                 step_tol, ws);
        break;
    }
  };

  // Fused Strang sweep: D(dt/2) [U D]^(n-1) ... with interior D's merging
  // the trailing half-step of segment k and the leading half of k+1.
  std::vector<double> xi_next(static_cast<std::size_t>(n_sites));
  load_xi(0);
  const double first_half = 0.5 * (n_full > 0 ? dt : tail);
  detail::apply_dephasing_phase(out.amplitudes, signs, xi.data(), n_sites,
                                first_half);
  for (int k = 0; k < n_segments; ++k) {
    const bool is_tail = (k == n_full);
    const double seg = is_tail ? tail : dt;
    h_step(seg);
    if (k + 1 < n_segments) {
      const bool next_is_tail = (k + 1 == n_full);
      const double next_seg = next_is_tail ? tail : dt;
      for (int j = 0; j < n_sites; ++j)
        xi_next[static_cast<std::size_t>(j)] = traj.at(j, start_segment + k + 1);
      // Merged: 0.5*seg with xi_k plus 0.5*next_seg with xi_{k+1}.
      std::vector<double> merged(static_cast<std::size_t>(n_sites));
      for (int j = 0; j < n_sites; ++j)
        merged[static_cast<std::size_t>(j)] =
            0.5 * (seg * xi[static_cast<std::size_t>(j)] +
                   next_seg * xi_next[static_cast<std::size_t>(j)]);
      detail::apply_dephasing_phase(out.amplitudes, signs, merged.data(),
                                    n_sites, 1.0);
      xi.swap(xi_next);
    } else {
      detail::apply_dephasing_phase(out.amplitudes, signs, xi.data(), n_sites,
                                    0.5 * seg);
    }
  }
  return out;
}

}  // namespace deeptherm
