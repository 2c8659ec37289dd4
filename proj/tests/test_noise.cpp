// Copyright 2026 The deeptherm Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "deeptherm/noise.hpp"

using namespace deeptherm;

TEST_CASE("white noise realizes variance W/dt with Gaussian statistics") {
  const double t2star = 1.0 * kSecPerUs;
  const double w = 2.0 / t2star;  // rad^2/s
  const double dt = 1.0 * kSecPerNs;
  const int n = 1'000'000;
  const NoiseTrajectory traj =
      sample_trajectory(NoiseSpec::white(w), 1, dt, n * dt, 314159);
  REQUIRE(traj.n_samples() == n);

  const auto& x = traj.samples[0];
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double m2 = 0.0, m4 = 0.0, lag1 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double d = x[static_cast<std::size_t>(k)] - mean;
    m2 += d * d;
    m4 += d * d * d * d;
    if (k > 0) lag1 += d * (x[static_cast<std::size_t>(k - 1)] - mean);
  }
  m2 /= n;
  m4 /= n;
  lag1 /= (n - 1);

  const double sigma2 = w / dt;
  CHECK(std::abs(mean) < 0.01 * std::sqrt(sigma2));
  CHECK(m2 == Catch::Approx(sigma2).epsilon(0.02));
  CHECK(m4 / (m2 * m2) == Catch::Approx(3.0).epsilon(0.03));  // kurtosis
  CHECK(std::abs(lag1) / m2 < 0.01);  // no step-to-step correlation
}

TEST_CASE("1/f synthesis carries the analytic total variance") {
  // One-sided S(omega) = A/omega: Var = (A / 2 pi) ln(hi / lo).
  NoiseSpec spec = NoiseSpec::one_over_f(1.0e6, 1.0e-3, 1.0e5);
  const double expected =
      spec.strength / kTwoPi * std::log(spec.high_cut_hz / spec.low_cut_hz);

  // Ensemble variance at fixed time across many realizations.
  const int n_real = 4000;
  double acc = 0.0;
  for (int r = 0; r < n_real; ++r) {
    const NoiseTrajectory traj =
        sample_trajectory(spec, 1, 1.0e-6, 3.0e-6, 777 + r);
    acc += traj.samples[0][1] * traj.samples[0][1];
  }
  acc /= n_real;
  CHECK(acc == Catch::Approx(expected).epsilon(0.08));
}

TEST_CASE("1/f periodogram tracks A/omega within 3 dB") {
  NoiseSpec spec = NoiseSpec::one_over_f(1.0e6, 1.0e-3, 1.0e5);
  const double dt = 2.0e-6;
  const int n = 10'000;  // T = 20 ms, bin spacing 50 Hz
  const double total = n * dt;
  const int n_real = 50;

  // Band-averaged one-sided periodogram around three probe frequencies.
  // A rectangular band [0.8 f, 1.25 f] covers several synthesis harmonics,
  // so the discrete line spectrum averages to the target density.
  for (const double f_probe : {1.0e3, 5.0e3, 2.0e4}) {
    const int bin_lo = static_cast<int>(std::ceil(0.8 * f_probe * total));
    const int bin_hi = static_cast<int>(std::floor(1.25 * f_probe * total));
    REQUIRE(bin_hi > bin_lo);
    double band_power = 0.0;
    for (int r = 0; r < n_real; ++r) {
      const NoiseTrajectory traj =
          sample_trajectory(spec, 1, dt, total, 100000 + r);
      for (int b = bin_lo; b <= bin_hi; ++b) {
        cd x{0.0, 0.0};
        const double w0 = kTwoPi * b / n;
        // Goertzel-style accumulation of X(f_b) = dt sum_k xi_k e^{-i w0 k}.
        const cd rot = std::polar(1.0, -w0);
        cd phase{1.0, 0.0};
        for (int k = 0; k < n; ++k) {
          x += traj.samples[0][static_cast<std::size_t>(k)] * phase;
          phase *= rot;
        }
        x *= dt;
        band_power += 2.0 * std::norm(x) / total;  // one-sided density
      }
    }
    const double measured = band_power / (n_real * (bin_hi - bin_lo + 1));
    const double f_mid = std::sqrt(0.8 * 1.25) * f_probe;
    const double target = spec.strength / (kTwoPi * f_mid);
    CHECK(measured > 0.5 * target);
    CHECK(measured < 2.0 * target);
  }
}

TEST_CASE("trajectories are deterministic in the seed") {
  const NoiseSpec spec = NoiseSpec::one_over_f(2.0e5);
  const NoiseTrajectory a = sample_trajectory(spec, 3, 1e-9, 1e-6, 42);
  const NoiseTrajectory b = sample_trajectory(spec, 3, 1e-9, 1e-6, 42);
  const NoiseTrajectory c = sample_trajectory(spec, 3, 1e-9, 1e-6, 43);
  REQUIRE(a.samples == b.samples);  // bitwise
  CHECK(a.samples != c.samples);
  CHECK(a.samples[0] != a.samples[1]);  // sites are independent
}

TEST_CASE("refinement repeats samples on a finer grid") {
  const NoiseTrajectory traj =
      sample_trajectory(NoiseSpec::white(1e6), 2, 1e-9, 5e-9, 1);
  const NoiseTrajectory fine = traj.refined(4);
  CHECK(fine.dt == Catch::Approx(traj.dt / 4));
  REQUIRE(fine.n_samples() == 4 * traj.n_samples());
  for (int k = 0; k < fine.n_samples(); ++k)
    CHECK(fine.at(1, k) == traj.at(1, k / 4));
}

TEST_CASE("malformed noise requests are rejected") {
  CHECK_THROWS_AS(sample_trajectory(NoiseSpec::white(1.0), 0, 1e-9, 1e-6, 0),
                  ParameterError);
  CHECK_THROWS_AS(sample_trajectory(NoiseSpec::white(1.0), 1, 0.0, 1e-6, 0),
                  ParameterError);
  NoiseSpec bad = NoiseSpec::one_over_f(1.0);
  bad.harmonics = 100;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = NoiseSpec::one_over_f(1.0, 1e5, 1e3);  // inverted band
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = NoiseSpec::white(-1.0);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("noise specs round-trip through JSON") {
  NoiseSpec spec = NoiseSpec::one_over_f(3.5e5, 2e-3, 5e4);
  spec.harmonics = 256;
  const NoiseSpec again = NoiseSpec::from_json(spec.to_json());
  CHECK(again.kind == spec.kind);
  CHECK(again.strength == Catch::Approx(spec.strength));
  CHECK(again.low_cut_hz == Catch::Approx(spec.low_cut_hz));
  CHECK(again.high_cut_hz == Catch::Approx(spec.high_cut_hz));
  CHECK(again.harmonics == spec.harmonics);
  CHECK_THROWS_AS(NoiseSpec::from_json(nlohmann::json::parse(
                      R"({"kind": "pink"})")),
                  ConfigError);
}

TEST_CASE("Ramsey envelope of white noise follows exp(-W t / 2)") {
  const double t2star = 1.0 * kSecPerUs;
  const NoiseSpec spec = NoiseSpec::white(2.0 / t2star);
  const double total = 3.0 * kSecPerUs;
  const int n_points = 300;
  const std::vector<double> env =
      ramsey_envelope(spec, total, n_points, 4000, 2024);
  REQUIRE(env.size() == static_cast<std::size_t>(n_points) + 1);
  CHECK(env[0] == Catch::Approx(1.0));
  for (const double frac : {0.2, 0.5, 1.0}) {
    const int k = static_cast<int>(frac * t2star / (total / n_points));
    const double t = k * total / n_points;
    CHECK(env[static_cast<std::size_t>(k)] ==
          Catch::Approx(std::exp(-t / t2star)).margin(0.03));
  }
  CHECK(t2star_from_envelope(env, total / n_points) ==
        Catch::Approx(t2star).epsilon(0.05));
}

TEST_CASE("calibration recovers the white-noise closed form") {
  const double t2star = 1.0 * kSecPerUs;
  CalibrationOptions opt;
  opt.n_trajectories = 4000;
  const double w =
      calibrate_from_t2star(NoiseSpec::Kind::kWhite, t2star, 5.0 * kSecPerUs,
                            opt);
  CHECK(w == Catch::Approx(2.0 / t2star).epsilon(0.05));
}

TEST_CASE("1/f calibration round-trips through an independent Ramsey") {
  const double t2star = 1.0 * kSecPerUs;
  CalibrationOptions opt;
  opt.n_trajectories = 4000;
  const double a = calibrate_from_t2star(NoiseSpec::Kind::kOneOverF, t2star,
                                         5.0 * kSecPerUs, opt);
  CHECK(a > 0.0);
  const NoiseSpec spec = NoiseSpec::one_over_f(a);
  const std::vector<double> env =
      ramsey_envelope(spec, 5.0 * kSecPerUs, 400, 4000, 888777);
  const double recovered = t2star_from_envelope(env, 5.0 * kSecPerUs / 400);
  CHECK(recovered == Catch::Approx(t2star).epsilon(0.05));
}

TEST_CASE("calibration failure modes raise calibration errors") {
  CHECK_THROWS_AS(
      calibrate_from_t2star(NoiseSpec::Kind::kWhite, 2.0 * kSecPerUs,
                            1.0 * kSecPerUs),
      CalibrationError);
  CHECK_THROWS_AS(
      calibrate_from_t2star(NoiseSpec::Kind::kWhite, -1.0, 1.0 * kSecPerUs),
      ParameterError);
  const std::vector<double> flat(100, 0.9);
  CHECK_THROWS_AS(t2star_from_envelope(flat, 1e-8), CalibrationError);
}
