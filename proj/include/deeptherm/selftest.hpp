// Copyright 2026 The deeptherm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "deeptherm/common.hpp"
#include "deeptherm/config.hpp"
#include "deeptherm/ensemble.hpp"
#include "deeptherm/evolution.hpp"
#include "deeptherm/lattice.hpp"
#include "deeptherm/measurement.hpp"
#include "deeptherm/noise.hpp"
#include "deeptherm/pipeline.hpp"
#include "deeptherm/state.hpp"
#include "deeptherm/stats.hpp"

/**
 * Acceptance self-test: ten end-to-end criteria covering the propagators,
 * conservation laws, projected-ensemble statistics, noise calibration, the
 * measurement pipeline, and reproducibility.  Every tolerance is pinned in
 * this header; seeds are fixed, so each criterion is deterministic.
 *
 * Three sub-checks are expected to FAIL, and are left failing on purpose.
 * They ask the ideal model for statistics it provably cannot produce:
 *
 *  - The square lattice is bipartite, so C = prod_{j in odd sublattice}
 *    sigma_j^z anticommutes with the XY Hamiltonian.  For a computational
 *    basis start |z0>, every amplitude <z|psi(t)> is purely real or purely
 *    imaginary (class fixed by the staggered parities of z and z0) at all
 *    times.  Rescaled sector probabilities D|<z|psi>|^2 therefore follow the
 *    chi-squared(1) (real Porter-Thomas) law, never Exp(1); the
 *    Kolmogorov-Smirnov distance between the two laws is 0.1645, which is
 *    the observed late-time plateau (criterion 6).
 *  - The same structure confines every post-selected conditional qubit
 *    state to a great circle of the Bloch sphere (for neighbouring sites in
 *    A the two block amplitudes live in opposite reality classes, so
 *    rho_01 is purely imaginary: the x = 0 meridian).  The maximal ensemble
 *    compatible with that is uniform on the circle, whose k-th moments sit
 *    at trace distance {0, 1/6, 1/4, 0.275} from the Haar moments for
 *    k = 1..4.  Criterion 3 requires Delta^(3)(306 ns) < Delta^(3)(2 ns)/3
 *    ~= 0.250 and Delta^(4)(306 ns) < 0.267, both at or below the exact
 *    floors, so k = 3, 4 cannot pass (k = 1, 2 do).
 *  - Under quasi-static 1/f dephasing (100 kHz cutoff, far below J) the
 *    9-qubit leakage curve carries a reproducible coherent finite-size
 *    modulation of ~1e-3 nats.  Against the small calibrated slope this
 *    caps R^2 near 0.989 for any early window, independent of trajectory
 *    count (criterion 7's 1/f linearity sub-check; the white channel
 *    passes).
 *
 * Breaking the chiral symmetry (site-dependent detunings, ZZ crosstalk,
 * readout smearing) restores Exp(1)/Haar statistics, which is why hardware
 * sees them; adding such terms here would misrepresent the model.
 */
namespace deeptherm {

struct CriterionResult {
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  std::vector<std::string> details;
};

namespace selftest_detail {

/// Collects [ok]/[FAIL] sub-check lines and the conjunction of their states.
struct CheckList {
  bool all_ok = true;
  std::vector<std::string> lines;

  void check(bool ok, const std::string& text) {
    all_ok = all_ok && ok;
    lines.push_back(std::string(ok ? "[ok]   " : "[FAIL] ") + text);
  }
  void note(const std::string& text) { lines.push_back("       " + text); }
};

inline std::string num(double v) { return format_double(v); }

template <typename Fn>
CriterionResult timed(const std::string& name, Fn&& body) {
  CriterionResult result;
  result.name = name;
  CheckList checks;
  const auto t0 = std::chrono::steady_clock::now();
  body(checks);
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  result.passed = checks.all_ok;
  result.details = std::move(checks.lines);
  return result;
}

/// Fidelity |<a|b>|^2 between normalized states on the same basis.
inline double fidelity(const StateVector& a, const StateVector& b) {
  return std::norm((a.amplitudes.adjoint() * b.amplitudes)(0));
}

}  // namespace selftest_detail

// ---------------------------------------------------------------------------
// 1. Oracle equivalence: Krylov and Chebyshev against dense diagonalization.
// ---------------------------------------------------------------------------
inline CriterionResult selftest_oracle_equivalence() {
  using selftest_detail::num;
  return selftest_detail::timed(
      "oracle-equivalence", [](selftest_detail::CheckList& checks) {
        constexpr double kMaxInfidelity = 1e-8;
        constexpr double kBudgetSeconds = 10.0;
        const auto t0 = std::chrono::steady_clock::now();
        struct Case {
          int rows, cols, excitations;  // excitations < 0 selects full space
        };
        for (const Case& c : {Case{2, 4, 4}, Case{1, 6, 3}, Case{2, 3, -1}}) {
          const int n = c.rows * c.cols;
          const BasisTag tag = c.excitations < 0
                                   ? BasisTag::full(n)
                                   : BasisTag::sector(n, c.excitations);
          std::string pattern;
          for (int j = 0; j < n; ++j) pattern += (j % 2 ? '1' : '0');
          const LatticeSpec lat(c.rows, c.cols);
          const StateVector psi0 =
              prepare_product_state(resolve_pattern(pattern, n), tag);
          const SparseHamiltonian h = build_hamiltonian(lat, tag);
          const double t = 500.0 * kSecPerNs;
          EvolutionConfig dense;
          dense.method = EvolveMethod::kDenseEig;
          EvolutionConfig cheb;
          cheb.method = EvolveMethod::kChebyshev;
          const StateVector ref = evolve(psi0, h, t, dense);
          const double inf_krylov =
              1.0 - selftest_detail::fidelity(ref, evolve(psi0, h, t));
          const double inf_cheb =
              1.0 - selftest_detail::fidelity(ref, evolve(psi0, h, t, cheb));
          checks.check(inf_krylov <= kMaxInfidelity,
                       tag.str() + " krylov infidelity " + num(inf_krylov) +
                           " <= " + num(kMaxInfidelity) + " at 500 ns");
          checks.check(inf_cheb <= kMaxInfidelity,
                       tag.str() + " chebyshev infidelity " + num(inf_cheb) +
                           " <= " + num(kMaxInfidelity) + " at 500 ns");
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t0)
                .count();
        checks.check(elapsed < kBudgetSeconds, "runtime " + num(elapsed) +
                                                   " s < " +
                                                   num(kBudgetSeconds) + " s");
      });
}

// ---------------------------------------------------------------------------
// 2. Conservation on the 4x4 Neel quench (sector dimension 12870).
// ---------------------------------------------------------------------------
inline CriterionResult selftest_conservation() {
  using selftest_detail::num;
  return selftest_detail::timed(
      "conservation", [](selftest_detail::CheckList& checks) {
        constexpr double kNormTol = 1e-10;
        constexpr double kChargeTol = 1e-8;
        constexpr double kBudgetSeconds = 120.0;
        const auto t0 = std::chrono::steady_clock::now();
        const BasisTag tag = BasisTag::sector(16, 8);
        StateVector psi =
            prepare_product_state(resolve_pattern("neel", 16), tag);
        const SparseHamiltonian h = build_hamiltonian(LatticeSpec(4, 4), tag);
        checks.check(tag.dimension() == 12870,
                     "sector dimension " + std::to_string(tag.dimension()) +
                         " == 12870");
        const double q0 = charge_expectation(psi);
        double norm_drift = 0.0, charge_drift = 0.0;
        for (int k = 0; k < 20; ++k) {  // 20 x 25 ns = 500 ns
          psi = evolve(psi, h, 25.0 * kSecPerNs);
          norm_drift =
              std::max(norm_drift, std::abs(psi.amplitudes.norm() - 1.0));
          charge_drift =
              std::max(charge_drift, std::abs(charge_expectation(psi) - q0));
        }
        checks.check(norm_drift < kNormTol, "norm drift " + num(norm_drift) +
                                                " < " + num(kNormTol) +
                                                " over 500 ns");
        checks.check(charge_drift < kChargeTol,
                     "charge drift " + num(charge_drift) + " < " +
                         num(kChargeTol) + " over 500 ns");
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t0)
                .count();
        checks.check(elapsed < kBudgetSeconds, "runtime " + num(elapsed) +
                                                   " s < " +
                                                   num(kBudgetSeconds) + " s");
      });
}

// ---------------------------------------------------------------------------
// 3. Deep thermalization of the 4x4 Neel quench, A = two bulk neighbours.
// ---------------------------------------------------------------------------
inline CriterionResult selftest_deep_thermalization() {
  using selftest_detail::num;
  return selftest_detail::timed(
      "deep-thermalization", [](selftest_detail::CheckList& checks) {
        // Frozen plateau regression bounds for max_{t >= 100 ns} Delta^(k),
        // derived from this exact simulation (observed maxima 0.0522, 0.1772,
        // 0.2542, 0.2769 on this grid) with headroom.  The k >= 2 plateaus
        // are set by the meridian ensemble floors {1/6, 1/4, 0.275}; see the
        // header comment.
        constexpr double kPlateau[4] = {0.06, 0.19, 0.28, 0.30};
        ExperimentConfig cfg;
        cfg.experiment = Experiment::kDeepThermalization;
        cfg.lattice = LatticeSpec(4, 4);
        cfg.initial_state = "neel";
        cfg.subsystem_a = {5, 6};  // two bulk neighbours
        cfg.seed = 42;
        const DeepThermResult run = run_deep_thermalization(make_context(cfg));

        std::map<int, std::map<double, double>> delta;  // k -> t -> Delta
        for (const MomentRow& row : run.rows)
          for (int k = 1; k <= 4; ++k)
            delta[k][row.t_ns] = row.delta[static_cast<std::size_t>(k - 1)];

        for (int k = 1; k <= 4; ++k) {
          const auto& curve = delta[k];
          const double at0 = curve.at(0.0);
          const double at2 = curve.at(2.0);
          const double at306 = curve.at(306.0);
          double late_max = 0.0;
          for (const auto& [t, v] : curve)
            if (t >= 100.0) late_max = std::max(late_max, v);
          checks.check(late_max < at0,
                       "k=" + std::to_string(k) + " falls from t=0: max Delta"
                           "(t>=100 ns) " + num(late_max) + " < Delta(0) " +
                           num(at0));
          checks.check(late_max < kPlateau[k - 1],
                       "k=" + std::to_string(k) + " settles: max Delta"
                           "(t>=100 ns) " + num(late_max) +
                           " < frozen plateau " + num(kPlateau[k - 1]));
          checks.check(at306 < at2 / 3.0,
                       "k=" + std::to_string(k) + " Delta(306 ns) " +
                           num(at306) + " < Delta(2 ns)/3 = " + num(at2 / 3.0));
        }
        checks.note(
            "k=3,4 ratio sub-checks fail on exact symmetry floors: the "
            "bipartite chiral symmetry pins conditional states to a Bloch "
            "great circle, whose uniform ensemble sits at Delta = 1/4 (k=3) "
            "and 0.275 (k=4) from Haar; the required bounds are 0.250 and "
            "0.267.");
      });
}

// ---------------------------------------------------------------------------
// 4. Haar self-test on 1e4 exact d=2 samples.
// ---------------------------------------------------------------------------
inline CriterionResult selftest_haar_moments() {
  using selftest_detail::num;
  return selftest_detail::timed(
      "haar-moments", [](selftest_detail::CheckList& checks) {
        constexpr double kDeltaTol[3] = {0.02, 0.03, 0.05};
        constexpr double kEntropyRelTol = 0.01;
        constexpr double kBudgetSeconds = 30.0;
        constexpr std::uint64_t kSeed = 20260815;
        const auto t0 = std::chrono::steady_clock::now();
        const ProjectedEnsemble haar = sample_haar_ensemble(2, 10000, kSeed);
        for (int k = 1; k <= 3; ++k) {
          const MomentMatrix m = moment_matrix(haar, k);
          const double dlt = trace_distance(m, haar_moment(2, k));
          const double s = moment_entropy(m);
          const double target = std::log(static_cast<double>(k + 1));
          checks.check(dlt < kDeltaTol[k - 1],
                       "Delta^(" + std::to_string(k) + ") = " + num(dlt) +
                           " < " + num(kDeltaTol[k - 1]));
          checks.check(std::abs(s - target) < kEntropyRelTol * target,
                       "S^(" + std::to_string(k) + ") = " + num(s) +
                           " within 1% of ln(" + std::to_string(k + 1) +
                           ") = " + num(target));
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t0)
                .count();
        checks.check(elapsed < kBudgetSeconds, "runtime " + num(elapsed) +
                                                   " s < " +
                                                   num(kBudgetSeconds) + " s");
      });
}

// ---------------------------------------------------------------------------
// 5. Entropy ceiling for pure ensembles; noisy ensembles exceed it.
// ---------------------------------------------------------------------------
inline CriterionResult selftest_entropy_bounds() {
  using selftest_detail::num;
  return selftest_detail::timed(
      "entropy-bounds", [](selftest_detail::CheckList& checks) {
        constexpr double kPureSlack = 1e-6;
        constexpr double kExceedMargin = 0.05;

        // Pure ensembles: a quench ensemble and an exact Haar ensemble.
        ExperimentConfig pure_cfg;
        pure_cfg.experiment = Experiment::kDeepThermalization;
        pure_cfg.lattice = LatticeSpec(4, 4);
        pure_cfg.initial_state = "neel";
        pure_cfg.subsystem_a = {5, 6};
        pure_cfg.time_grid.snapshots_ns = {306.0};
        pure_cfg.time_grid.linear_points = 0;
        pure_cfg.seed = 42;
        const DeepThermResult pure_run =
            run_deep_thermalization(make_context(pure_cfg));
        const ProjectedEnsemble haar = sample_haar_ensemble(2, 5000, 777);
        for (int k = 1; k <= 4; ++k) {
          const double ceiling = std::log(static_cast<double>(k + 1));
          const double s_quench =
              moment_entropy(moment_matrix(pure_run.final_ensemble, k));
          const double s_haar = moment_entropy(moment_matrix(haar, k));
          checks.check(s_quench <= ceiling + kPureSlack,
                       "pure quench S^(" + std::to_string(k) + ") = " +
                           num(s_quench) + " <= ln(k+1)+1e-6 = " +
                           num(ceiling + kPureSlack));
          checks.check(s_haar <= ceiling + kPureSlack,
                       "pure Haar S^(" + std::to_string(k) + ") = " +
                           num(s_haar) + " <= ln(k+1)+1e-6 = " +
                           num(ceiling + kPureSlack));
        }

        // Trajectory-averaged white-noise ensembles at a late time.
        ExperimentConfig noisy_cfg;
        noisy_cfg.experiment = Experiment::kDeepThermalization;
        noisy_cfg.lattice = LatticeSpec(3, 3);
        noisy_cfg.initial_state = "neel";
        noisy_cfg.subsystem_a = {4, 5};
        noisy_cfg.time_grid.snapshots_ns = {400.0};
        noisy_cfg.time_grid.linear_points = 0;
        noisy_cfg.mode = RunMode::kNoisy;
        NoiseChannelConfig white;
        white.label = "white";
        white.spec = NoiseSpec::white(4.0e6);  // T2* = 0.5 us
        noisy_cfg.noise = {white};
        noisy_cfg.trajectories = 48;
        noisy_cfg.trajectory_block = 8;
        noisy_cfg.evolution.trotter_dt = 0.5 * kSecPerNs;
        noisy_cfg.seed = 42;
        const DeepThermResult noisy_run =
            run_deep_thermalization(make_context(noisy_cfg));
        for (int k = 2; k <= 4; ++k) {
          const double ceiling = std::log(static_cast<double>(k + 1));
          const double s =
              moment_entropy(moment_matrix(noisy_run.final_ensemble, k));
          checks.check(s > ceiling + kExceedMargin,
                       "white-noise S^(" + std::to_string(k) + ")(400 ns) = " +
                           num(s) + " > ln(k+1) = " + num(ceiling));
        }
      });
}

// ---------------------------------------------------------------------------
// 6. Porter-Thomas statistics of late-time sector amplitudes.
// ---------------------------------------------------------------------------
inline CriterionResult selftest_porter_thomas() {
  using selftest_detail::num;
  return selftest_detail::timed(
      "porter-thomas", [](selftest_detail::CheckList& checks) {
        constexpr double kLateTol = 0.05;
        constexpr double kEarlyMin = 0.3;
        const BasisTag tag = BasisTag::sector(16, 8);
        StateVector psi =
            prepare_product_state(resolve_pattern("neel", 16), tag);
        const SparseHamiltonian h = build_hamiltonian(LatticeSpec(4, 4), tag);
        const double d = static_cast<double>(tag.dimension());
        checks.check(tag.dimension() == 12870,
                     "rescaling uses D = " + std::to_string(tag.dimension()));

        const StateVector early = evolve(psi, h, 2.0 * kSecPerNs);
        const PorterThomasResult pt_early = porter_thomas_test(early, d);
        checks.check(pt_early.ks > kEarlyMin,
                     "KS(2 ns) vs Exp(1) = " + num(pt_early.ks) + " > " +
                         num(kEarlyMin));

        for (const double t_ns : {306.0, 500.0}) {
          StateVector late = evolve(psi, h, t_ns * kSecPerNs);
          const PorterThomasResult pt = porter_thomas_test(late, d);
          checks.check(pt.ks < kLateTol,
                       "KS(" + num(t_ns) + " ns) vs Exp(1) = " + num(pt.ks) +
                           " < " + num(kLateTol));
          checks.note("KS(" + num(t_ns) + " ns) vs chi-squared(1) = " +
                      num(pt.ks_chi1) +
                      "; Exp(1) distance plateaus at the chi2(1)-vs-Exp(1) "
                      "gap 0.1645");
        }
        checks.note(
            "late-time sub-checks fail by symmetry: basis amplitudes of a "
            "bipartite XY quench stay purely real or purely imaginary, so "
            "D|<z|psi>|^2 follows chi-squared(1), not Exp(1); hardware "
            "imperfections (detunings, crosstalk) break the symmetry, which "
            "is why experiments see Exp(1).");
      });
}

// ---------------------------------------------------------------------------
// 7. Many-body information-leakage benchmark on the 9-qubit psi1 setup.
// ---------------------------------------------------------------------------
inline CriterionResult selftest_leakage_benchmark() {
  using selftest_detail::num;
  return selftest_detail::timed(
      "leakage-benchmark", [](selftest_detail::CheckList& checks) {
        constexpr double kZeroNoiseTol = 1e-9;
        constexpr double kR2Min = 0.99;
        constexpr double kRatioMin = 2.0;
        constexpr double kTauLow = 0.1e-6, kTauHigh = 10.0e-6;
        constexpr double kBudgetSeconds = 1800.0;
        const auto t0 = std::chrono::steady_clock::now();

        ExperimentConfig cfg;
        cfg.experiment = Experiment::kLeakage;
        cfg.lattice = LatticeSpec(3, 3);
        cfg.initial_state = "psi1";
        cfg.basis = "full";
        cfg.subsystem_a = {4};  // central qubit
        cfg.time_grid.snapshots_ns.clear();
        for (int i = 1; i <= 16; ++i)
          cfg.time_grid.snapshots_ns.push_back(25.0 * i);
        cfg.time_grid.linear_points = 0;
        cfg.mode = RunMode::kNoisy;
        NoiseChannelConfig none;
        none.label = "none";
        NoiseChannelConfig white;
        white.label = "white";
        white.spec.kind = NoiseSpec::Kind::kWhite;
        white.t2star_us = 1.0;
        NoiseChannelConfig pink;
        pink.label = "one_over_f";
        pink.spec.kind = NoiseSpec::Kind::kOneOverF;
        pink.t2star_us = 1.0;
        cfg.noise = {none, white, pink};
        cfg.trajectories = 200;
        cfg.trajectory_block = 8;
        cfg.seed = 42;
        const LeakageResult run = run_leakage_benchmark(make_context(cfg));

        const LeakageChannelResult* by_label[3] = {nullptr, nullptr, nullptr};
        for (const auto& c : run.channels) {
          if (c.label == "none") by_label[0] = &c;
          if (c.label == "white") by_label[1] = &c;
          if (c.label == "one_over_f") by_label[2] = &c;
        }
        double zero_max = 0.0;
        for (const double e : by_label[0]->entropy)
          zero_max = std::max(zero_max, std::abs(e));
        checks.check(zero_max <= kZeroNoiseTol,
                     "zero-noise max |E_A| = " + num(zero_max) + " <= " +
                         num(kZeroNoiseTol));

        double tau[2] = {0.0, 0.0};
        for (int i : {1, 2}) {
          const LeakageChannelResult& c = *by_label[i];
          if (!c.fit) {
            checks.check(false, c.label + " linear fit failed: " +
                                    c.fit_error);
            continue;
          }
          tau[i - 1] = c.fit->tau;
          checks.check(c.fit->r2 > kR2Min,
                       c.label + " early-window R^2 = " + num(c.fit->r2) +
                           " > " + num(kR2Min) + " (" +
                           std::to_string(c.fit->window_points) + " points)");
          checks.check(c.fit->tau > kTauLow && c.fit->tau < kTauHigh,
                       c.label + " tau = " + num(c.fit->tau / kSecPerUs) +
                           " us within 0.1..10 us");
        }
        if (tau[0] > 0.0 && tau[1] > 0.0) {
          checks.check(tau[0] < tau[1],
                       "tau(white) = " + num(tau[0] / kSecPerUs) +
                           " us < tau(1/f) = " + num(tau[1] / kSecPerUs) +
                           " us");
          checks.check(tau[1] / tau[0] > kRatioMin,
                       "tau(1/f)/tau(white) = " + num(tau[1] / tau[0]) +
                           " > " + num(kRatioMin));
        }
        checks.note(
            "the 1/f R^2 sub-check fails on faithful physics: with the "
            "100 kHz cutoff the noise is quasi-static against J/2pi = 4 MHz, "
            "and the small leakage slope rides a reproducible coherent "
            "finite-size modulation (~1e-3 nats) that caps R^2 near 0.989 "
            "at any trajectory count.");
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t0)
                .count();
        checks.check(elapsed < kBudgetSeconds, "runtime " + num(elapsed) +
                                                   " s < " +
                                                   num(kBudgetSeconds) + " s");
      });
}

// ---------------------------------------------------------------------------
// 8. Noise calibration round trips.
// ---------------------------------------------------------------------------
inline CriterionResult selftest_noise_calibration() {
  using selftest_detail::num;
  return selftest_detail::timed(
      "noise-calibration", [](selftest_detail::CheckList& checks) {
        constexpr double kRelTol = 0.05;
        constexpr double kTarget = 1.0e-6;    // T2* 1 us
        constexpr double kRamseyTotal = 5.0e-6;
        constexpr int kEnvelopePoints = 400;
        constexpr int kEnvelopeTrajectories = 8000;
        CalibrationOptions opt;
        opt.seed = 20260815;

        // White: Monte-Carlo calibration against the closed form W = 2/T2*.
        const double w_cal = calibrate_from_t2star(NoiseSpec::Kind::kWhite,
                                                   kTarget, kRamseyTotal, opt);
        const double w_closed = 2.0 / kTarget;
        checks.check(std::abs(w_cal - w_closed) < kRelTol * w_closed,
                     "white calibrated W = " + num(w_cal) +
                         " matches 2/T2* = " + num(w_closed) + " within 5%");

        // White: closed-form strength reproduces the target T2* in a
        // Monte-Carlo Ramsey experiment.
        const double dt = kRamseyTotal / kEnvelopePoints;
        const NoiseSpec wspec = NoiseSpec::white(w_closed);
        const double t2_white = t2star_from_envelope(
            ramsey_envelope(wspec, kRamseyTotal, kEnvelopePoints,
                            kEnvelopeTrajectories, 4242),
            dt);
        checks.check(std::abs(t2_white - kTarget) < kRelTol * kTarget,
                     "white W=2/T2* Ramsey round trip T2* = " +
                         num(t2_white / kSecPerUs) + " us within 5% of 1 us");

        // 1/f: calibrate, then an independent Ramsey run must reproduce the
        // target.
        const double a_cal = calibrate_from_t2star(
            NoiseSpec::Kind::kOneOverF, kTarget, kRamseyTotal, opt);
        NoiseSpec pspec;
        pspec.kind = NoiseSpec::Kind::kOneOverF;
        pspec.strength = a_cal;
        const double t2_pink = t2star_from_envelope(
            ramsey_envelope(pspec, kRamseyTotal, kEnvelopePoints,
                            kEnvelopeTrajectories, 2424),
            dt);
        checks.check(std::abs(t2_pink - kTarget) < kRelTol * kTarget,
                     "1/f calibrated A = " + num(a_cal) +
                         " Ramsey round trip T2* = " +
                         num(t2_pink / kSecPerUs) + " us within 5% of 1 us");
      });
}

// ---------------------------------------------------------------------------
// 9. Measurement pipeline: confusion + inverse mitigation + tomography.
// ---------------------------------------------------------------------------
inline CriterionResult selftest_measurement_pipeline() {
  using selftest_detail::num;
  return selftest_detail::timed(
      "measurement-pipeline", [](selftest_detail::CheckList& checks) {
        constexpr double kF00 = 0.996, kF11 = 0.975;
        constexpr std::int64_t kMarginalShots = 20000;
        constexpr std::int64_t kBaseShotsPerBasis = 12000;
        constexpr double kSelectionThreshold = 80.0;
        constexpr double kTomoTol = 0.05;
        constexpr double kHalvingLow = 0.35, kHalvingHigh = 0.65;

        const LatticeSpec lat(2, 3);
        const BasisTag tag = BasisTag::sector(6, 3);
        StateVector psi =
            prepare_product_state(resolve_pattern("010101", 6), tag);
        const SparseHamiltonian h = build_hamiltonian(lat, tag);
        psi = evolve(psi, h, 80.0 * kSecPerNs);
        const std::vector<int> a_sites = {2, 3}, b_sites = {0, 1, 4, 5};
        const ConfusionMatrix conf = ConfusionMatrix::uniform(6, kF00, kF11);

        // (a) Marginals through confusion + inverse mitigation.
        {
          const ShotTable raw = sample_shots(psi, a_sites, "ZZ",
                                             kMarginalShots, conf, 0xA11CE);
          const ShotTable mit =
              mitigate_counts(raw, conf, MitigationMode::kInverse);
          const std::vector<double> exact = excitation_density(psi);
          double worst = 0.0;
          for (int j = 0; j < 6; ++j) {
            double n = 0.0;
            for (const auto& [s, c] : mit.counts)
              n += c * static_cast<double>(bit_at(s, j));
            n /= mit.total();
            worst = std::max(worst, std::abs(n - exact[static_cast<
                                                 std::size_t>(j)]));
          }
          const double bound =
              5.0 / std::sqrt(static_cast<double>(kMarginalShots));
          checks.check(worst < bound, "worst mitigated marginal error " +
                                          num(worst) + " < 5/sqrt(M) = " +
                                          num(bound));
        }

        // (b, c) Conditional-state tomography; the error is the
        // probability-weighted mean trace distance over every bath string
        // that clears the >= 80 counts/basis selection rule.
        const ProjectedEnsemble exact_ens = exact_ensemble(psi, a_sites, 0.0);
        const auto tomo_error = [&](std::int64_t shots_per_basis,
                                    std::uint64_t salt, double* min_counts) {
          std::vector<ShotTable> tables;
          int basis_index = 0;
          for (const std::string& label : tomography_bases()) {
            const ShotTable raw =
                sample_shots(psi, a_sites, label, shots_per_basis, conf,
                             salt + 0x100 + static_cast<std::uint64_t>(
                                                basis_index++));
            tables.push_back(
                mitigate_counts(raw, conf, MitigationMode::kInverse));
          }
          const std::vector<std::uint32_t> kept =
              select_bitstrings(tables, b_sites, kSelectionThreshold);
          double wsum = 0.0, weighted = 0.0;
          *min_counts = 1e300;
          for (const std::uint32_t z_b : kept) {
            const TomogramA tomogram =
                tomo_reconstruct(tables, a_sites, z_b, kSelectionThreshold);
            for (const auto& [label, counts] : tomogram.counts_per_basis)
              *min_counts = std::min(*min_counts, counts);
            const EnsembleEntry* entry = nullptr;
            for (const auto& e : exact_ens.entries)
              if (e.z_b == z_b) entry = &e;
            if (entry == nullptr) continue;
            const double w = probability_of(z_b, tables, b_sites);
            weighted += w * trace_distance(tomogram.rho, entry->rho);
            wsum += w;
          }
          return weighted / wsum;
        };
        double min1 = 0.0, min4 = 0.0;
        const double td1 = tomo_error(kBaseShotsPerBasis, 0xB0, &min1);
        const double td4 = tomo_error(4 * kBaseShotsPerBasis, 0xC0, &min4);
        checks.check(min1 >= kSelectionThreshold,
                     "selection keeps only strings with >= 80 counts/basis "
                     "(min " + num(min1) + ")");
        checks.check(td1 <= kTomoTol, "mean tomography trace distance " +
                                          num(td1) + " <= " + num(kTomoTol));
        const double ratio = td4 / td1;
        checks.check(ratio > kHalvingLow && ratio < kHalvingHigh,
                     "error ratio at 4x counts = " + num(ratio) +
                         " within 0.5 +- 30% (mean TD " + num(td4) + ")");
      });
}

// ---------------------------------------------------------------------------
// 10. Determinism: byte-identical artifacts for any worker count.
// ---------------------------------------------------------------------------
inline CriterionResult selftest_determinism() {
  using selftest_detail::num;
  namespace fs = std::filesystem;
  return selftest_detail::timed(
      "determinism", [](selftest_detail::CheckList& checks) {
        ExperimentConfig cfg;
        cfg.experiment = Experiment::kDeepThermalization;
        cfg.lattice = LatticeSpec(1, 4);
        cfg.initial_state = "0101";
        cfg.subsystem_a = {1, 2};
        cfg.time_grid.snapshots_ns = {4.0, 12.0};
        cfg.time_grid.linear_points = 0;
        cfg.mode = RunMode::kNoisy;
        NoiseChannelConfig white;
        white.label = "white";
        white.spec = NoiseSpec::white(2.0e6);
        cfg.noise = {white};
        cfg.trajectories = 9;
        cfg.trajectory_block = 2;  // forces multi-block reduction
        cfg.evolution.trotter_dt = 0.5 * kSecPerNs;
        cfg.seed = 1234;

        const fs::path base =
            fs::temp_directory_path() /
            ("deeptherm-selftest-" + std::to_string(::getpid()));
        std::map<std::string, std::string> reference;
        bool identical = true;
        for (const int workers : {1, 3, 1}) {
          cfg.workers = workers;
          cfg.output_dir =
              (base / ("w" + std::to_string(workers))).string();
          const RunResult run = run_experiment(cfg, cfg.to_json().dump(2));
          std::map<std::string, std::string> hashes;
          for (const auto& entry : fs::directory_iterator(run.out_dir)) {
            std::ifstream in(entry.path(), std::ios::binary);
            std::ostringstream buf;
            buf << in.rdbuf();
            hashes[entry.path().filename().string()] = sha256_hex(buf.str());
          }
          if (reference.empty()) {
            reference = hashes;
            checks.note("reference run produced " +
                        std::to_string(hashes.size()) + " artifacts");
          } else {
            identical = identical && (hashes == reference);
          }
          fs::remove_all(cfg.output_dir);
        }
        fs::remove_all(base);
        checks.check(identical,
                     "artifact hashes identical across workers {1, 3} and a "
                     "repeat run");
      });
}

/// Runs all ten criteria in order.
inline std::vector<CriterionResult> run_selftest() {
  std::vector<CriterionResult> results;
  results.push_back(selftest_oracle_equivalence());
  results.push_back(selftest_conservation());
  results.push_back(selftest_deep_thermalization());
  results.push_back(selftest_haar_moments());
  results.push_back(selftest_entropy_bounds());
  results.push_back(selftest_porter_thomas());
  results.push_back(selftest_leakage_benchmark());
  results.push_back(selftest_noise_calibration());
  results.push_back(selftest_measurement_pipeline());
  results.push_back(selftest_determinism());
  return results;
}

/// Prints one PASS/FAIL line per criterion plus its sub-check details.
/// Returns true when every criterion passed.
inline bool print_selftest_report(std::ostream& os,
                                  const std::vector<CriterionResult>& results) {
  int n_passed = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const CriterionResult& r = results[i];
    n_passed += r.passed ? 1 : 0;
    os << "[" << (i + 1) << "/" << results.size() << "] " << r.name << " "
       << std::string(r.name.size() < 24 ? 24 - r.name.size() : 1, '.') << " "
       << (r.passed ? "PASS" : "FAIL") << " ("
       << format_double(r.seconds) << " s)\n";
    for (const std::string& line : r.details) os << "    " << line << "\n";
  }
  os << "RESULT: " << n_passed << "/" << results.size()
     << " criteria passed\n";
  return n_passed == static_cast<int>(results.size());
}

}  // namespace deeptherm
