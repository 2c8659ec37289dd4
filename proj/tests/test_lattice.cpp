// Copyright 2026 The deeptherm Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "deeptherm/lattice.hpp"

using namespace deeptherm;

TEST_CASE("bit rendering is MSB-first with bit i = Q_i") {
  CHECK(format_bits(0b0011u, 4) == "0011");
  CHECK(format_bits(0b1010u, 4) == "1010");
  CHECK(parse_bits("0011") == 0b0011u);
  CHECK(parse_bits("1010") == 0b1010u);
  CHECK(bit_at(parse_bits("0010"), 1) == 1);  // second-from-right char is Q_1
  CHECK_THROWS_AS(parse_bits("01x"), ParameterError);
  CHECK_THROWS_AS(parse_bits(""), ParameterError);
}

TEST_CASE("sector enumeration: 4 sites, 2 excitations") {
  const SectorBasis basis = enumerate_sector(4, 2);
  REQUIRE(basis.dimension() == 6);
  // Ascending integers: 0011, 0101, 0110, 1001, 1010, 1100.
  const std::vector<std::uint32_t> expect{3, 5, 6, 9, 10, 12};
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(basis.state(i) == expect[i]);
    CHECK(basis.rank(expect[i]) == static_cast<int>(i));
  }
  CHECK(basis.rank(0b0111u) == -1);  // wrong weight
}

TEST_CASE("sector dimensions are binomial coefficients") {
  CHECK(enumerate_sector(16, 8).dimension() == 12870);
  CHECK(enumerate_sector(9, 4).dimension() == 126);
  CHECK(enumerate_sector(5, 0).dimension() == 1);
  CHECK(enumerate_sector(5, 5).dimension() == 1);
  CHECK(BasisTag::sector(16, 8).dimension() == 12870);
  CHECK(BasisTag::full(16).dimension() == 65536);
  CHECK_THROWS_AS(enumerate_sector(4, 5), ParameterError);
  CHECK_THROWS_AS(enumerate_sector(4, -1), ParameterError);
}

TEST_CASE("basis tags round-trip through strings") {
  const BasisTag a = BasisTag::sector(16, 8);
  const BasisTag b = BasisTag::full(9);
  CHECK(BasisTag::parse(a.str()) == a);
  CHECK(BasisTag::parse(b.str()) == b);
  CHECK_THROWS_AS(BasisTag::parse("sector:16"), ConfigError);
  CHECK_THROWS_AS(BasisTag::parse("banana"), ConfigError);
}

TEST_CASE("lattice neighbours follow row-major layout") {
  const LatticeSpec grid(2, 3);  // sites 0 1 2 / 3 4 5
  CHECK(grid.sites() == 6);
  CHECK(grid.is_neighbor(0, 1));
  CHECK(grid.is_neighbor(1, 2));
  CHECK(grid.is_neighbor(0, 3));
  CHECK(grid.is_neighbor(2, 5));
  CHECK_FALSE(grid.is_neighbor(2, 3));  // row wrap is not a bond
  CHECK_FALSE(grid.is_neighbor(0, 4));  // diagonal
  CHECK_FALSE(grid.is_neighbor(1, 1));
  CHECK(grid.bonds().size() == 7);  // 2*2 horizontal + 3 vertical
  CHECK_THROWS_AS(grid.is_neighbor(0, 6), ParameterError);
}

TEST_CASE("coupling defaults and overrides") {
  LatticeSpec grid(2, 2);
  CHECK(grid.coupling(0, 1) == Catch::Approx(kDefaultCouplingRadPerSec));
  grid.set_coupling(1, 0, 0.5 * kDefaultCouplingRadPerSec);
  CHECK(grid.coupling(0, 1) ==
        Catch::Approx(0.5 * kDefaultCouplingRadPerSec));  // order-insensitive
  CHECK_THROWS_AS(grid.set_coupling(0, 3, 1.0), ConfigError);
  CHECK_THROWS_AS(grid.coupling(0, 3), ConfigError);
}

TEST_CASE("lattice JSON round trip with MHz units") {
  const auto doc = nlohmann::json::parse(R"({
    "rows": 2, "cols": 3, "j_default_mhz": 4.0,
    "j_overrides": [{"i": 0, "j": 1, "mhz": 2.0}]
  })");
  const LatticeSpec spec = LatticeSpec::from_json(doc);
  CHECK(spec.coupling(0, 1) == Catch::Approx(2.0 * kRadPerSecPerMHz));
  CHECK(spec.coupling(1, 2) == Catch::Approx(4.0 * kRadPerSecPerMHz));
  const LatticeSpec again = LatticeSpec::from_json(spec.to_json());
  CHECK(again.coupling(0, 1) == Catch::Approx(spec.coupling(0, 1)));
  CHECK(again.coupling(3, 4) == Catch::Approx(spec.coupling(3, 4)));

  CHECK_THROWS_AS(LatticeSpec::from_json(nlohmann::json::parse("{}")),
                  ConfigError);
  CHECK_THROWS_AS(LatticeSpec::from_json(nlohmann::json::parse(
                      R"({"rows": 2, "cols": 2,
                          "j_overrides": [{"i": 0, "j": 3, "mhz": 1.0}]})")),
                  ConfigError);
}

TEST_CASE("two-site Hamiltonian in the one-excitation sector") {
  const LatticeSpec chain(1, 2);
  const auto h = build_hamiltonian(chain, BasisTag::sector(2, 1));
  REQUIRE(h.dimension() == 2);
  const Eigen::MatrixXd dense = h.dense();
  const double j = kDefaultCouplingRadPerSec;
  CHECK(dense(0, 0) == 0.0);
  CHECK(dense(1, 1) == 0.0);
  CHECK(dense(0, 1) == Catch::Approx(j));
  CHECK(dense(1, 0) == Catch::Approx(j));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense);
  CHECK(eig.eigenvalues()[0] == Catch::Approx(-j));
  CHECK(eig.eigenvalues()[1] == Catch::Approx(j));
}

TEST_CASE("2x2 plaquette sector Hamiltonian structure") {
  // Basis 0011,0101,0110,1001,1010,1100.  The two "diagonal" states
  // 0110 and 1001 couple to all four bonds; the others to two each.
  const LatticeSpec grid(2, 2);
  const auto h = build_hamiltonian(grid, BasisTag::sector(4, 2));
  REQUIRE(h.dimension() == 6);
  const Eigen::MatrixXd dense = h.dense();
  CHECK(dense.isApprox(dense.transpose()));
  const SectorBasis basis = enumerate_sector(4, 2);
  for (std::size_t r = 0; r < 6; ++r) {
    const int nnz = static_cast<int>((dense.row(static_cast<Eigen::Index>(r))
                                          .array()
                                          .abs() > 0.0)
                                         .count());
    const std::uint32_t s = basis.state(r);
    const int expected = (s == 0b0110u || s == 0b1001u) ? 4 : 2;
    CHECK(nnz == expected);
  }
  CHECK(dense.trace() == 0.0);
}

TEST_CASE("full-space Hamiltonian conserves excitation number") {
  const LatticeSpec grid(2, 3);
  const auto h = build_hamiltonian(grid);
  REQUIRE(h.dimension() == 64);
  Eigen::VectorXcd unit = Eigen::VectorXcd::Zero(64);
  for (std::uint32_t s = 0; s < 64; ++s) {
    unit.setZero();
    unit[s] = cd{1.0, 0.0};
    const Eigen::VectorXcd image = h.apply(unit);
    for (std::uint32_t r = 0; r < 64; ++r) {
      if (std::abs(image[r]) == 0.0) continue;
      CHECK(bit_weight(r) == bit_weight(s));
    }
  }
}

TEST_CASE("sector restriction agrees with the full-space Hamiltonian") {
  const LatticeSpec grid(2, 3);
  LatticeSpec tweaked = grid;
  tweaked.set_coupling(1, 4, 1.7 * kDefaultCouplingRadPerSec);
  const auto h_full = build_hamiltonian(tweaked);
  const auto h_sector = build_hamiltonian(tweaked, BasisTag::sector(6, 3));
  const SectorBasis basis = enumerate_sector(6, 3);

  Eigen::VectorXcd x(static_cast<Eigen::Index>(basis.dimension()));
  Rng rng(7);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x[i] = cd{rng.normal(), rng.normal()};

  const Eigen::VectorXcd y_sector = h_sector.apply(x);
  Eigen::VectorXcd embedded = Eigen::VectorXcd::Zero(64);
  for (std::size_t r = 0; r < basis.dimension(); ++r)
    embedded[basis.state(r)] = x[static_cast<Eigen::Index>(r)];
  const Eigen::VectorXcd y_full = h_full.apply(embedded);
  for (std::size_t r = 0; r < basis.dimension(); ++r)
    CHECK(std::abs(y_full[basis.state(r)] -
                   y_sector[static_cast<Eigen::Index>(r)]) < 1e-9);
}

TEST_CASE("Gershgorin bound dominates the spectrum") {
  const LatticeSpec grid(2, 2);
  const auto h = build_hamiltonian(grid);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h.dense());
  const double radius = std::max(std::abs(eig.eigenvalues()[0]),
                                 std::abs(eig.eigenvalues()[15]));
  CHECK(h.norm_bound() >= radius);
  CHECK(h.norm_bound() <= 4.0 * kDefaultCouplingRadPerSec * 1.0001);
}

TEST_CASE("basis mismatch is rejected") {
  const LatticeSpec grid(2, 2);
  CHECK_THROWS_AS(build_hamiltonian(grid, BasisTag::sector(5, 2)),
                  ParameterError);
  const auto h = build_hamiltonian(grid);
  Eigen::VectorXcd wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(h.apply(wrong), ParameterError);
}
