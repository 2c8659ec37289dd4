// Copyright 2026 The deeptherm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "deeptherm/common.hpp"

/**
 * Classical dephasing noise: per-site frequency-shift processes xi_j(t)
 * entering the Hamiltonian as (1/2) sum_j xi_j(t) sigma_j^z.
 *
 * Two spectral shapes are supported:
 *  - white: S(omega) = W (constant).  Realized as i.i.d. normal steps of
 *    variance W/dt on the simulation grid; the spectrum is flat up to the
 *    grid Nyquist.  Closed form: a Ramsey envelope decays as
 *    exp(-W t / 2), so T2* = 2 / W.
 *  - 1/f:  S(omega) = A / |omega| between angular cutoffs, realized as a
 *    superposition of >= 200 log-spaced harmonics with random phases
 *    (amplitudes sqrt(2 S(omega_m) dOmega_m / (2 pi)), one-sided density).
 *
 * Strengths are W [rad^2/s] and A [rad^2]; times are seconds.
 */
namespace deeptherm {

struct NoiseSpec {
  enum class Kind { kWhite, kOneOverF };

  Kind kind = Kind::kWhite;
  /// W [rad^2/s] for white, A [rad^2] for 1/f.
  double strength = 0.0;
  /// Angular-frequency band for 1/f synthesis, given as ordinary Hz.
  double low_cut_hz = 1.0e-3;
  double high_cut_hz = 1.0e5;
  /// Number of log-spaced harmonics for 1/f (>= 200 required).
  int harmonics = 220;

  static NoiseSpec white(double strength_w) {
    NoiseSpec s;
    s.kind = Kind::kWhite;
    s.strength = strength_w;
    s.high_cut_hz = 1.0e9;  // documented band edge; grid Nyquist governs
    return s;
  }

  static NoiseSpec one_over_f(double strength_a, double low_cut_hz = 1.0e-3,
                              double high_cut_hz = 1.0e5) {
    NoiseSpec s;
    s.kind = Kind::kOneOverF;
    s.strength = strength_a;
    s.low_cut_hz = low_cut_hz;
    s.high_cut_hz = high_cut_hz;
    return s;
  }

  void validate() const {
    if (strength < 0.0)
      throw ConfigError("NoiseSpec: strength must be non-negative");
    if (kind == Kind::kOneOverF) {
      if (low_cut_hz <= 0.0 || high_cut_hz <= low_cut_hz)
        throw ConfigError("NoiseSpec: 1/f needs 0 < low_cut < high_cut");
      if (harmonics < 200)
        throw ConfigError("NoiseSpec: 1/f synthesis needs >= 200 harmonics");
    }
  }

  static NoiseSpec from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("kind"))
      throw ConfigError("noise JSON must carry a kind field");
    const std::string kind = doc["kind"].get<std::string>();
    NoiseSpec s;
    if (kind == "white") {
      s = white(0.0);
    } else if (kind == "one_over_f" || kind == "1/f") {
      s = one_over_f(0.0);
    } else if (kind == "none") {
      s = white(0.0);
      return s;
    } else {
      throw ConfigError("noise JSON kind must be white, one_over_f or none");
    }
    if (doc.contains("strength")) s.strength = doc["strength"].get<double>();
    if (doc.contains("low_cut_hz"))
      s.low_cut_hz = doc["low_cut_hz"].get<double>();
    if (doc.contains("high_cut_hz"))
      s.high_cut_hz = doc["high_cut_hz"].get<double>();
    if (doc.contains("harmonics")) s.harmonics = doc["harmonics"].get<int>();
    s.validate();
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json doc;
    doc["kind"] = kind == Kind::kWhite ? "white" : "one_over_f";
    doc["strength"] = strength;
    doc["low_cut_hz"] = low_cut_hz;
    doc["high_cut_hz"] = high_cut_hz;
    if (kind == Kind::kOneOverF) doc["harmonics"] = harmonics;
    return doc;
  }
};

// ---------------------------------------------------------------------------
// Sampled trajectories.
// ---------------------------------------------------------------------------

/// One realization of xi_j(t) for every site, sampled at step midpoints
/// t_k = (k + 1/2) dt, k = 0..n_samples-1.  Units rad/s.
struct NoiseTrajectory {
  int site_count = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  /// samples[j][k] = xi_j at midpoint k.
  std::vector<std::vector<double>> samples;

  int n_samples() const {
    return samples.empty() ? 0 : static_cast<int>(samples.front().size());
  }
  double span() const { return dt * n_samples(); }
  double at(int site, int k) const { return samples[site][k]; }

  /// Same physical path on a grid refined by `factor` (each sample repeated).
  /// Used by splitting-convergence checks: the noise path is held fixed
  /// while the integrator step shrinks.
  NoiseTrajectory refined(int factor) const {
    if (factor < 1)
      throw ParameterError("NoiseTrajectory::refined: factor must be >= 1");
    NoiseTrajectory out;
    out.site_count = site_count;
    out.dt = dt / factor;
    out.seed = seed;
    out.samples.resize(samples.size());
    for (std::size_t j = 0; j < samples.size(); ++j) {
      out.samples[j].reserve(samples[j].size() * factor);
      for (double v : samples[j])
        for (int r = 0; r < factor; ++r) out.samples[j].push_back(v);
    }
    return out;
  }
};

namespace detail {

/// Log-spaced angular frequencies and their integration weights dOmega_m
/// (midpoint rule on the log grid, half-intervals at the edges).
inline void one_over_f_grid(const NoiseSpec& spec, std::vector<double>* omega,
                            std::vector<double>* weight) {
  const int m = spec.harmonics;
  const double lo = kTwoPi * spec.low_cut_hz;
  const double hi = kTwoPi * spec.high_cut_hz;
  omega->resize(m);
  const double step = std::log(hi / lo) / (m - 1);
  for (int i = 0; i < m; ++i) (*omega)[i] = lo * std::exp(step * i);
  weight->resize(m);
  for (int i = 0; i < m; ++i) {
    const double left = i == 0 ? (*omega)[0] : (*omega)[i - 1];
    const double right = i == m - 1 ? (*omega)[m - 1] : (*omega)[i + 1];
    (*weight)[i] = 0.5 * (right - left);
  }
}

/// Harmonic amplitudes a_m = sqrt(2 S(omega_m) dOmega_m / (2 pi)) for
/// S(omega) = A / omega.
inline void one_over_f_amplitudes(const NoiseSpec& spec,
                                  std::vector<double>* omega,
                                  std::vector<double>* amp) {
  std::vector<double> weight;
  one_over_f_grid(spec, omega, &weight);
  amp->resize(omega->size());
  for (std::size_t i = 0; i < omega->size(); ++i)
    (*amp)[i] = std::sqrt(2.0 * (spec.strength / (*omega)[i]) * weight[i] /
                          kTwoPi);
}

}  // namespace detail

/**
 * Samples one trajectory of duration total_time on grid step dt for every
 * site.  Deterministic in (spec, sites, dt, total_time, seed); each site
 * consumes its draws in sequence from a single engine.
 *
 * 1/f evaluation uses a phasor-rotation recurrence: each harmonic keeps a
 * complex phasor advanced by exp(i omega dt) per step, replacing a cos()
 * per harmonic per step with one complex multiply (identical math).
 */
inline NoiseTrajectory sample_trajectory(const NoiseSpec& spec, int sites,
                                         double dt, double total_time,
                                         std::uint64_t seed) {
  spec.validate();
  if (sites < 1) throw ParameterError("sample_trajectory: sites must be >= 1");
  if (dt <= 0.0) throw ParameterError("sample_trajectory: dt must be positive");
  if (total_time < 0.0)
    throw ParameterError("sample_trajectory: total_time must be >= 0");
  const int n = static_cast<int>(std::ceil(total_time / dt - 1e-9));

  NoiseTrajectory traj;
  traj.site_count = sites;
  traj.dt = dt;
  traj.seed = seed;
  traj.samples.assign(static_cast<std::size_t>(sites),
                      std::vector<double>(static_cast<std::size_t>(n), 0.0));
  if (n == 0) return traj;

  Rng rng(seed);
  if (spec.kind == NoiseSpec::Kind::kWhite) {
    const double sigma = std::sqrt(spec.strength / dt);
    for (int j = 0; j < sites; ++j)
      for (int k = 0; k < n; ++k) traj.samples[j][k] = sigma * rng.normal();
    return traj;
  }

  std::vector<double> omega, amp;
  detail::one_over_f_amplitudes(spec, &omega, &amp);
  if (omega.empty())
    throw ParameterError("sample_trajectory: empty frequency grid");
  const int m = static_cast<int>(omega.size());
  std::vector<cd> phasor(omega.size());
  std::vector<cd> rotor(omega.size());
  for (int i = 0; i < m; ++i)
    rotor[i] = std::polar(1.0, omega[i] * dt);
  for (int j = 0; j < sites; ++j) {
    for (int i = 0; i < m; ++i) {
      const double phase0 = kTwoPi * rng.uniform();  // random phase phi_m
      // Start at the first midpoint t_0 = dt/2.
      phasor[i] = std::polar(amp[i], omega[i] * (0.5 * dt) + phase0);
    }
    for (int k = 0; k < n; ++k) {
      double value = 0.0;
      for (int i = 0; i < m; ++i) {
        value += phasor[i].real();
        phasor[i] *= rotor[i];
      }
      traj.samples[j][k] = value;
    }
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Ramsey envelopes and T2* calibration.
// ---------------------------------------------------------------------------

/**
 * Monte-Carlo Ramsey envelope |<exp(i phi(t))>| on t_k = k dt,
 * k = 0..n_points, where phi(t) integrates a single site's xi.  The
 * ensemble average runs over n_trajectories independent realizations.
 */
inline std::vector<double> ramsey_envelope(const NoiseSpec& spec,
                                           double total_time, int n_points,
                                           int n_trajectories,
                                           std::uint64_t seed) {
  if (n_points < 1 || n_trajectories < 1)
    throw ParameterError("ramsey_envelope: counts must be positive");
  const double dt = total_time / n_points;
  std::vector<cd> acc(static_cast<std::size_t>(n_points) + 1, cd{0.0, 0.0});
  for (int r = 0; r < n_trajectories; ++r) {
    const NoiseTrajectory traj =
        sample_trajectory(spec, 1, dt, total_time, seed + static_cast<std::uint64_t>(r));
    double phi = 0.0;
    acc[0] += cd{1.0, 0.0};
    for (int k = 0; k < n_points; ++k) {
      phi += traj.samples[0][static_cast<std::size_t>(k)] * dt;
      acc[static_cast<std::size_t>(k) + 1] += std::polar(1.0, phi);
    }
  }
  std::vector<double> env(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i)
    env[i] = std::abs(acc[i]) / n_trajectories;
  return env;
}

/// First crossing of the 1/e level, linearly interpolated on the grid.
inline double t2star_from_envelope(const std::vector<double>& env, double dt) {
  const double level = std::exp(-1.0);
  for (std::size_t k = 1; k < env.size(); ++k) {
    if (env[k] <= level) {
      const double f = (env[k - 1] - level) /
                       std::max(env[k - 1] - env[k], 1e-300);
      return dt * (static_cast<double>(k - 1) + f);
    }
  }
  throw CalibrationError(
      "t2star_from_envelope: envelope never crossed 1/e within the window");
}

struct CalibrationOptions {
  int n_trajectories = 8000;
  int n_points = 400;
  double relative_tolerance = 0.01;
  int max_iterations = 200;
  std::uint64_t seed = 0x0ddc0ffee1234567ull;
  double low_cut_hz = 1.0e-3;   // 1/f band
  double high_cut_hz = 1.0e5;
  int harmonics = 220;
};

/**
 * Finds the strength (W or A) whose Monte-Carlo Ramsey envelope crosses 1/e
 * at target_t2star.  ramsey_total must comfortably exceed the target or the
 * bracket fails (calibration error).
 *
 * Dephasing phases scale as sqrt(strength) for both shapes, so the search
 * samples unit-strength phase paths once and rescales them inside the
 * bisection (common random numbers; the bracket is then exactly monotone).
 */
inline double calibrate_from_t2star(NoiseSpec::Kind kind, double target_t2star,
                                    double ramsey_total,
                                    const CalibrationOptions& opt = {}) {
  if (target_t2star <= 0.0)
    throw ParameterError("calibrate_from_t2star: target must be positive");
  if (ramsey_total <= target_t2star)
    throw CalibrationError(
        "calibrate_from_t2star: ramsey window must exceed the target T2*");

  NoiseSpec unit = kind == NoiseSpec::Kind::kWhite
                       ? NoiseSpec::white(1.0)
                       : NoiseSpec::one_over_f(1.0, opt.low_cut_hz,
                                               opt.high_cut_hz);
  unit.harmonics = opt.harmonics;

  const double dt = ramsey_total / opt.n_points;
  // Unit-strength accumulated phases phi_r(t_k), r = trajectory.
  Eigen::MatrixXd phases(opt.n_trajectories, opt.n_points + 1);
  for (int r = 0; r < opt.n_trajectories; ++r) {
    const NoiseTrajectory traj = sample_trajectory(
        unit, 1, dt, ramsey_total, opt.seed + static_cast<std::uint64_t>(r));
    double phi = 0.0;
    phases(r, 0) = 0.0;
    for (int k = 0; k < opt.n_points; ++k) {
      phi += traj.samples[0][static_cast<std::size_t>(k)] * dt;
      phases(r, k + 1) = phi;
    }
  }

  const auto t2_of = [&](double strength) -> double {
    const double scale = std::sqrt(strength);
    std::vector<double> env(static_cast<std::size_t>(opt.n_points) + 1);
    for (int k = 0; k <= opt.n_points; ++k) {
      cd acc{0.0, 0.0};
      for (int r = 0; r < opt.n_trajectories; ++r)
        acc += std::polar(1.0, scale * phases(r, k));
      env[static_cast<std::size_t>(k)] = std::abs(acc) / opt.n_trajectories;
    }
    return t2star_from_envelope(env, dt);
  };

  // Bracket: strength up => faster dephasing => smaller T2*.
  double lo = kind == NoiseSpec::Kind::kWhite ? 2.0 / ramsey_total
                                              : 1.0 / ramsey_total;
  double hi = lo;
  const auto t2_or_inf = [&](double strength) {
    try {
      return t2_of(strength);
    } catch (const CalibrationError&) {
      return std::numeric_limits<double>::infinity();  // too weak to cross
    }
  };
  int guard = 0;
  while (t2_or_inf(lo) <= target_t2star) {
    lo /= 4.0;
    if (++guard > 60)
      throw CalibrationError("calibrate_from_t2star: lower bracket failed");
  }
  guard = 0;
  while (t2_or_inf(hi) > target_t2star) {
    hi *= 4.0;
    if (++guard > 60)
      throw CalibrationError("calibrate_from_t2star: upper bracket failed");
  }

  double strength = std::sqrt(lo * hi);
  for (int it = 0; it < opt.max_iterations; ++it) {
    strength = std::sqrt(lo * hi);
    const double t2 = t2_or_inf(strength);
    if (std::abs(t2 - target_t2star) <= opt.relative_tolerance * target_t2star)
      return strength;
    if (t2 > target_t2star)
      lo = strength;
    else
      hi = strength;
  }
  throw CalibrationError(
      "calibrate_from_t2star: bisection failed to converge; bracket [" +
      format_double(lo) + ", " + format_double(hi) + "]");
}

}  // namespace deeptherm
