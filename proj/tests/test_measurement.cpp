// Copyright 2026 The deeptherm Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "deeptherm/ensemble.hpp"
#include "deeptherm/evolution.hpp"
#include "deeptherm/measurement.hpp"

using namespace deeptherm;

namespace {

// Bell pair (|01> + |10>)/sqrt(2) on sites {1, 2} of 4 sites, with the bath
// sites frozen at |0>: build amplitudes directly.
StateVector bell_on_middle() {
  StateVector psi;
  psi.basis = BasisTag::full(4);
  psi.amplitudes = Eigen::VectorXcd::Zero(16);
  const double r = 1.0 / std::sqrt(2.0);
  // site1=1: bit1; site2=1: bit2.
  psi.amplitudes[0b0010] = cd{r, 0.0};
  psi.amplitudes[0b0100] = cd{r, 0.0};
  return psi;
}

ShotTable& table_for(std::vector<ShotTable>& tables, const std::string& b) {
  for (auto& t : tables)
    if (t.basis == b) return t;
  throw std::runtime_error("missing basis " + b);
}

}  // namespace

TEST_CASE("confusion matrix validation") {
  CHECK_NOTHROW(ConfusionMatrix::uniform(4, 0.996, 0.975));
  CHECK_THROWS_AS(ConfusionMatrix::uniform(4, 1.2, 0.9), ParameterError);
  CHECK_THROWS_AS(ConfusionMatrix::uniform(4, 0.9, -0.1), ParameterError);
  CHECK(ConfusionMatrix::ideal(4).is_ideal());
  CHECK_FALSE(ConfusionMatrix::uniform(4, 0.996, 0.975).is_ideal());
}

TEST_CASE("ideal Z sampling reproduces Born probabilities") {
  const StateVector psi = bell_on_middle();
  const int shots = 20000;
  const ShotTable table = sample_shots(psi, {1, 2}, "ZZ", shots,
                                       ConfusionMatrix::ideal(4), 11);
  CHECK(table.total() == Catch::Approx(static_cast<double>(shots)));
  // Only 0010 and 0100 can appear; each with probability 1/2.
  double seen = 0.0;
  for (const auto& [bits, count] : table.counts) {
    const bool valid = bits == 0b0010u || bits == 0b0100u;
    CHECK(valid);
    seen += count;
    CHECK(count / shots == Catch::Approx(0.5).margin(0.02));
  }
  CHECK(seen == Catch::Approx(static_cast<double>(shots)));
}

TEST_CASE("X and Y bases expose Bell coherences") {
  const StateVector psi = bell_on_middle();
  const int shots = 40000;
  // <XX> = +1 and <YY> = +1 for (|01> + |10>)/sqrt(2): outcome parity on A
  // must be even in both bases.
  for (const std::string basis : {"XX", "YY"}) {
    const ShotTable table = sample_shots(psi, {1, 2}, basis, shots,
                                         ConfusionMatrix::ideal(4), 17);
    double even = 0.0;
    for (const auto& [bits, count] : table.counts) {
      const int a0 = bit_at(bits, 1), a1 = bit_at(bits, 2);
      if (a0 == a1) even += count;
    }
    CHECK(even / shots == Catch::Approx(1.0).margin(1e-12));
  }
  // Single-qubit X marginal of the Bell pair is maximally mixed.
  const ShotTable xz = sample_shots(psi, {1, 2}, "XZ", shots,
                                    ConfusionMatrix::ideal(4), 23);
  double x_plus = 0.0;
  for (const auto& [bits, count] : xz.counts)
    if (bit_at(bits, 1) == 0) x_plus += count;
  CHECK(x_plus / shots == Catch::Approx(0.5).margin(0.02));
}

TEST_CASE("confusion flips follow the per-qubit response") {
  // Deterministic |0000> state: readout errors alone set the counts.
  StateVector psi;
  psi.basis = BasisTag::full(4);
  psi.amplitudes = Eigen::VectorXcd::Zero(16);
  psi.amplitudes[0] = cd{1.0, 0.0};
  const ConfusionMatrix conf = ConfusionMatrix::uniform(4, 0.9, 0.85);
  const int shots = 50000;
  const ShotTable table = sample_shots(psi, {0, 1}, "ZZ", shots, conf, 31);
  // Each qubit reads 1 with probability 0.1 independently.
  double q0_ones = 0.0;
  for (const auto& [bits, count] : table.counts)
    if (bit_at(bits, 0)) q0_ones += count;
  CHECK(q0_ones / shots == Catch::Approx(0.1).margin(0.01));
}

TEST_CASE("inverse mitigation undoes the confusion model exactly") {
  // Single qubit, f00 = 0.9, f11 = 1.0: observed (90, 10) from true (100, 0).
  ShotTable observed;
  observed.n_sites = 1;
  observed.basis = "Z";
  observed.shots = 100;
  observed.counts[0] = 90.0;
  observed.counts[1] = 10.0;
  ConfusionMatrix conf = ConfusionMatrix::uniform(1, 0.9, 1.0);
  const ShotTable fixed =
      mitigate_counts(observed, conf, MitigationMode::kInverse);
  CHECK(fixed.total() == Catch::Approx(100.0));
  CHECK(fixed.counts.at(0) == Catch::Approx(100.0));
  // Bin 1 is dropped entirely (<= 1e-12).
  CHECK((fixed.counts.find(1) == fixed.counts.end() ||
         fixed.counts.at(1) < 1e-9));
}

TEST_CASE("inverse mitigation clips negative solutions") {
  // Observed (95, 5) with the same response: raw inverse gives (105.6, -5.6);
  // clipping and renormalizing returns (100, 0).
  ShotTable observed;
  observed.n_sites = 1;
  observed.basis = "Z";
  observed.shots = 100;
  observed.counts[0] = 95.0;
  observed.counts[1] = 5.0;
  ConfusionMatrix conf = ConfusionMatrix::uniform(1, 0.9, 1.0);
  const ShotTable fixed =
      mitigate_counts(observed, conf, MitigationMode::kInverse);
  CHECK(fixed.total() == Catch::Approx(100.0));
  CHECK(fixed.counts.at(0) == Catch::Approx(100.0));
}

TEST_CASE("statistical inverse mitigation recovers true marginals") {
  const StateVector psi = bell_on_middle();
  const ConfusionMatrix conf = ConfusionMatrix::uniform(4, 0.95, 0.92);
  const int shots = 200000;
  const ShotTable noisy = sample_shots(psi, {1, 2}, "ZZ", shots, conf, 41);
  const ShotTable fixed =
      mitigate_counts(noisy, conf, MitigationMode::kInverse);
  // True distribution: half 0010, half 0100.
  double p0010 = 0.0, p0100 = 0.0, other = 0.0;
  for (const auto& [bits, count] : fixed.counts) {
    if (bits == 0b0010u)
      p0010 += count;
    else if (bits == 0b0100u)
      p0100 += count;
    else
      other += count;
  }
  CHECK(p0010 / shots == Catch::Approx(0.5).margin(0.02));
  CHECK(p0100 / shots == Catch::Approx(0.5).margin(0.02));
  CHECK(other / shots < 0.02);
}

TEST_CASE("mitigation modes and failure cases") {
  ShotTable observed;
  observed.n_sites = 1;
  observed.basis = "Z";
  observed.shots = 10;
  observed.counts[0] = 10.0;
  // Singular response (f00 + f11 = 1) cannot be inverted.
  ConfusionMatrix singular = ConfusionMatrix::uniform(1, 0.5, 0.5);
  CHECK_THROWS_AS(
      mitigate_counts(observed, singular, MitigationMode::kInverse),
      MitigationError);
  // as-written applies the response forward: (10, 0) -> (9, 1).
  ConfusionMatrix conf = ConfusionMatrix::uniform(1, 0.9, 0.95);
  const ShotTable forward =
      mitigate_counts(observed, conf, MitigationMode::kAsWritten);
  CHECK(forward.counts.at(0) == Catch::Approx(9.0));
  CHECK(forward.counts.at(1) == Catch::Approx(1.0));
  CHECK(forward.total() == Catch::Approx(10.0));
  // none leaves the table untouched.
  const ShotTable kept =
      mitigate_counts(observed, conf, MitigationMode::kNone);
  CHECK(kept.counts.at(0) == Catch::Approx(10.0));
  // inverse then forward is the identity on expectations.
  const ShotTable undone = mitigate_counts(
      mitigate_counts(forward, conf, MitigationMode::kInverse), conf,
      MitigationMode::kAsWritten);
  CHECK(undone.counts.at(0) == Catch::Approx(9.0).margin(1e-9));
  CHECK(parse_mitigation_mode("inverse") == MitigationMode::kInverse);
  CHECK(parse_mitigation_mode("as-written") == MitigationMode::kAsWritten);
  CHECK(parse_mitigation_mode("none") == MitigationMode::kNone);
  CHECK_THROWS_AS(parse_mitigation_mode("fancy"), ConfigError);
}

TEST_CASE("shot tables round-trip through CSV") {
  std::vector<ShotTable> tables;
  for (const auto& basis : tomography_bases()) {
    ShotTable t;
    t.n_sites = 4;
    t.basis = basis;
    t.shots = 3;
    t.counts[0b0010] = 2.0;
    t.counts[0b1011] = 1.0;
    tables.push_back(t);
  }
  const std::string path = "shots_roundtrip_test.csv";
  write_shot_tables(tables, path);
  const std::vector<ShotTable> again = read_shot_tables(path);
  std::filesystem::remove(path);
  REQUIRE(again.size() == tables.size());
  for (const auto& t : again) {
    CHECK(t.n_sites == 4);
    CHECK(t.counts.at(0b0010) == Catch::Approx(2.0));
    CHECK(t.counts.at(0b1011) == Catch::Approx(1.0));
  }
  CHECK_THROWS_AS(read_shot_tables("no_such_file_here.csv"), ConfigError);
}

TEST_CASE("bitstring selection respects the per-basis threshold") {
  std::vector<ShotTable> tables;
  for (const auto& basis : tomography_bases()) {
    ShotTable t;
    t.n_sites = 4;
    t.basis = basis;
    // Bath sites are {0, 3}; A = {1, 2}. Bath pattern 0b1001 (sites 0 and 3
    // set) gets exactly 80 counts in every basis; pattern 0 gets 79 in one.
    t.counts[0b1001] = 50.0;  // A = 00, bath = 11
    t.counts[0b1111] = 30.0;  // A = 11, bath = 11
    t.counts[0b0000] = basis == "XX" ? 79.0 : 200.0;
    t.shots = t.total();
    tables.push_back(t);
  }
  const std::vector<std::uint32_t> kept = select_bitstrings(tables, {0, 3});
  REQUIRE(kept.size() == 1);
  CHECK(kept.front() == 0b11u);  // bath (Q0, Q3) = (1, 1), ascending label
  const std::vector<std::uint32_t> loose =
      select_bitstrings(tables, {0, 3}, 79.0);
  CHECK(loose.size() == 2);
  CHECK(loose.front() == 0b00u);
}

TEST_CASE("tomography reconstructs conditional states from shots") {
  // 4-site product state with A = {1, 3} in |01>: site1 = 1, site3 = 0,
  // bath sites {0, 2} in |10>: site0 = 1, site2 = 0.
  const StateVector psi = prepare_product_state("1100", BasisTag::full(4));
  const std::vector<int> subsystem{1, 3};
  const ConfusionMatrix ideal = ConfusionMatrix::ideal(4);
  std::vector<ShotTable> tables;
  for (const auto& basis : tomography_bases())
    tables.push_back(sample_shots(psi, subsystem, basis, 4000, ideal, 97));

  const std::uint32_t z_b = 0b01u;  // bath (Q0, Q2) = (1, 0), ascending
  const TomogramA tomo = tomo_reconstruct(tables, subsystem, z_b);
  CHECK(probability_of(z_b, tables, {0, 2}) == Catch::Approx(1.0));
  // rho should be |01><01| (MSB-first local label: Q1 = 1, Q3 = 0 -> index 1).
  Eigen::Matrix4cd expected = Eigen::Matrix4cd::Zero();
  expected(1, 1) = 1.0;
  const Eigen::MatrixXcd diff = tomo.rho - expected;
  CHECK(0.5 * diff.cwiseAbs().sum() < 0.05);
}

TEST_CASE("tomography of the Bell conditional matches the exact state") {
  const StateVector psi = bell_on_middle();
  const std::vector<int> subsystem{1, 2};
  const ConfusionMatrix ideal = ConfusionMatrix::ideal(4);
  std::vector<ShotTable> tables;
  for (const auto& basis : tomography_bases())
    tables.push_back(sample_shots(psi, subsystem, basis, 20000, ideal, 7));
  const TomogramA tomo = tomo_reconstruct(tables, subsystem, 0b00u);

  Eigen::Vector4cd bell = Eigen::Vector4cd::Zero();
  bell[1] = cd{1.0 / std::sqrt(2.0), 0.0};
  bell[2] = cd{1.0 / std::sqrt(2.0), 0.0};
  const Eigen::Matrix4cd target = bell * bell.adjoint();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(
      Eigen::MatrixXcd(tomo.rho - target));
  CHECK(0.5 * eig.eigenvalues().cwiseAbs().sum() < 0.05);
  CHECK(tomo.rho.trace().real() == Catch::Approx(1.0));
}

TEST_CASE("tomography error cases") {
  const StateVector psi = bell_on_middle();
  const ConfusionMatrix ideal = ConfusionMatrix::ideal(4);
  std::vector<ShotTable> tables;
  for (const auto& basis : tomography_bases())
    tables.push_back(sample_shots(psi, {1, 2}, basis, 100, ideal, 3));
  // Rare bath pattern: no counts at z_b = 3.
  CHECK_THROWS_AS(tomo_reconstruct(tables, {1, 2}, 0b11u),
                  ReconstructionError);
  // Missing basis.
  std::vector<ShotTable> missing(tables.begin(), tables.end() - 1);
  CHECK_THROWS_AS(tomo_reconstruct(missing, {1, 2}, 0b00u),
                  ReconstructionError);
  // Duplicate basis.
  std::vector<ShotTable> dup = tables;
  dup.push_back(tables.front());
  CHECK_THROWS_AS(tomo_reconstruct(dup, {1, 2}, 0b00u), ReconstructionError);
}

TEST_CASE("PSD projection clips and renormalizes") {
  Eigen::Matrix2cd m;
  m << 1.2, 0.0, 0.0, -0.2;
  const Eigen::MatrixXcd fixed = project_psd(m);
  CHECK(fixed(0, 0).real() == Catch::Approx(1.0));
  CHECK(fixed(1, 1).real() == Catch::Approx(0.0).margin(1e-12));
  Eigen::Matrix2cd hopeless;
  hopeless << -1.0, 0.0, 0.0, -2.0;
  CHECK_THROWS_AS(project_psd(hopeless), ReconstructionError);
}

TEST_CASE("shot-based ensembles approach the exact conditional states") {
  // Full tomography pipeline check on an entangled state.
  const LatticeSpec grid(2, 2);
  const auto h = build_hamiltonian(grid);
  StateVector psi = prepare_product_state("psi1", BasisTag::full(4));
  psi = evolve(psi, h, 60.0 * kSecPerNs);
  const std::vector<int> subsystem{1, 2};

  std::vector<ShotTable> tables;
  for (const auto& basis : tomography_bases())
    tables.push_back(
        sample_shots(psi, subsystem, basis, 60000, ConfusionMatrix::ideal(4),
                     1234));
  const ProjectedEnsemble exact = exact_ensemble(psi, subsystem, 0.0);
  const std::vector<int> bath = complement_sites(subsystem, 4);
  for (const auto& entry : exact.entries) {
    if (entry.p < 0.05) continue;
    const TomogramA tomo = tomo_reconstruct(tables, subsystem, entry.z_b);
    CHECK(probability_of(entry.z_b, tables, bath) ==
          Catch::Approx(entry.p).margin(0.02));
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(
        Eigen::MatrixXcd(tomo.rho - entry.rho));
    CHECK(0.5 * eig.eigenvalues().cwiseAbs().sum() < 0.06);
  }
}
