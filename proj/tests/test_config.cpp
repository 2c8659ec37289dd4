// Copyright 2026 The deeptherm Authors
// SPDX-License-Identifier: Apache-2.0

#include "deeptherm/config.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

using namespace deeptherm;
using nlohmann::json;

namespace {

json minimal_dt() {
  return json{{"experiment", "deep_thermalization"}};
}

}  // namespace

TEST_CASE("defaults resolve to the flagship run", "[config]") {
  const ExperimentConfig cfg = ExperimentConfig::from_json(minimal_dt());
  CHECK(cfg.experiment == Experiment::kDeepThermalization);
  CHECK(cfg.n_sites() == 16);
  CHECK(cfg.initial_state == "neel");
  CHECK(cfg.subsystem_a == std::vector<int>{5, 6});
  CHECK(cfg.mode == RunMode::kExact);
  CHECK(cfg.k_max == 4);
  CHECK(cfg.seed == 42);

  const BasisTag tag = cfg.resolved_basis();
  REQUIRE(tag.is_sector());
  CHECK(tag.excitations == 8);
  CHECK(tag.dimension() == 12870);

  // Auto post-selection keeps one excitation on A: bath charge Q - 1.
  CHECK(cfg.resolved_post_select() == 7);
  CHECK(cfg.resolved_shots() == 200000);
}

TEST_CASE("resolved config round-trips through JSON", "[config]") {
  json doc = minimal_dt();
  doc["lattice"] = {{"rows", 2}, {"cols", 3}};
  doc["subsystem_a"] = {2, 3};
  doc["initial_state"] = "010101";
  doc["mode"] = "shots";
  doc["shots_per_basis"] = 1234;
  doc["mitigation"] = "as-written";
  doc["seed"] = 7;
  const ExperimentConfig cfg = ExperimentConfig::from_json(doc);

  const json resolved = cfg.to_json();
  const ExperimentConfig again = ExperimentConfig::from_json(resolved);
  CHECK(again.to_json() == resolved);  // fixed point
  CHECK(again.n_sites() == 6);
  CHECK(again.resolved_shots() == 1234);
  CHECK(again.mitigation == MitigationMode::kAsWritten);
  CHECK(again.seed == 7);

  // Execution-only fields stay out of the resolved document.
  CHECK(!resolved.contains("workers"));
  CHECK(!resolved.contains("output_dir"));
}

TEST_CASE("time grid merges snapshots with the linear ramp", "[config]") {
  TimeGridConfig grid;
  grid.snapshots_ns = {2.0, 50.0, 306.0};
  grid.linear_points = 3;
  grid.t_max_ns = 500.0;
  const std::vector<double> t = grid.resolve_ns();
  // Ramp contributes 0, 250, 500; snapshots interleave.
  REQUIRE(t.size() == 6);
  CHECK(t[0] == 0.0);
  CHECK(t[1] == 2.0);
  CHECK(t[2] == 50.0);
  CHECK(t[3] == 250.0);
  CHECK(t[4] == 306.0);
  CHECK(t[5] == 500.0);

  // Duplicates collapse.
  grid.snapshots_ns = {0.0, 250.0};
  CHECK(grid.resolve_ns().size() == 3);
}

TEST_CASE("explicit time grids must increase strictly", "[config]") {
  const json ok = json::array({1.0, 2.0, 3.0});
  const TimeGridConfig grid = TimeGridConfig::from_json(ok);
  CHECK(grid.linear_points == 0);
  CHECK(grid.resolve_ns() == std::vector<double>{1.0, 2.0, 3.0});

  CHECK_THROWS_AS(TimeGridConfig::from_json(json::array({2.0, 2.0})),
                  ConfigError);
  CHECK_THROWS_AS(TimeGridConfig::from_json(json::array()), ConfigError);
  CHECK_THROWS_AS(
      TimeGridConfig::from_json(json{{"linear_points", 1}}), ConfigError);
}

TEST_CASE("unknown keys are rejected", "[config]") {
  json doc = minimal_dt();
  doc["trajektories"] = 100;  // typo must not be silently dropped
  CHECK_THROWS_WITH(ExperimentConfig::from_json(doc),
                    Catch::Matchers::ContainsSubstring("trajektories"));
}

TEST_CASE("mode and experiment constraints are enforced", "[config]") {
  // Leakage requires noisy mode.
  json leak = {{"experiment", "leakage"}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(leak), ConfigError);

  // Ergodicity never runs noisy.
  json erg = {{"experiment", "ergodicity"},
              {"mode", "noisy"},
              {"noise", {{{"kind", "white"}, {"strength", 1.0}}}}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(erg), ConfigError);

  // Noise channels outside noisy mode are an error.
  json stray = minimal_dt();
  stray["noise"] = {{{"kind", "white"}, {"strength", 1.0}}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(stray), ConfigError);

  // Noisy deep thermalization takes exactly one channel.
  json multi = minimal_dt();
  multi["mode"] = "noisy";
  multi["noise"] = {{{"kind", "white"}, {"strength", 1.0}},
                    {{"kind", "one_over_f"}, {"strength", 1.0}}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(multi), ConfigError);

  // Subsystem A is pinned to two sites.
  json wide = minimal_dt();
  wide["subsystem_a"] = {1, 2, 3};
  CHECK_THROWS_AS(ExperimentConfig::from_json(wide), ConfigError);

  // zb_pattern must match |A| for ergodicity runs.
  json zb = {{"experiment", "ergodicity"}, {"zb_pattern", "101"}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(zb), ConfigError);
}

TEST_CASE("noise channels demand exactly one strength source", "[config]") {
  CHECK_THROWS_AS(NoiseChannelConfig::from_json(
                      {{"kind", "white"}, {"strength", 1.0},
                       {"t2star_us", 1.0}}),
                  ConfigError);
  CHECK_THROWS_AS(NoiseChannelConfig::from_json({{"kind", "white"}}),
                  ConfigError);
  CHECK_THROWS_AS(NoiseChannelConfig::from_json(
                      {{"kind", "none"}, {"t2star_us", 1.0}}),
                  ConfigError);

  const NoiseChannelConfig t2 = NoiseChannelConfig::from_json(
      {{"kind", "1/f"}, {"t2star_us", 1.0}});
  CHECK(t2.label == "one_over_f");
  CHECK(t2.spec.kind == NoiseSpec::Kind::kOneOverF);
  CHECK(t2.t2star_us == 1.0);

  const NoiseChannelConfig none =
      NoiseChannelConfig::from_json({{"kind", "none"}});
  CHECK(none.is_none());
  CHECK(none.to_json() == json{{"kind", "none"}});
}

TEST_CASE("basis resolution honors the pattern charge", "[config]") {
  ExperimentConfig cfg;
  cfg.lattice = LatticeSpec(2, 2);
  cfg.subsystem_a = {1, 2};
  cfg.initial_state = "0110";
  CHECK(cfg.resolved_basis() == BasisTag::sector(4, 2));

  cfg.basis = "full";
  CHECK(cfg.resolved_basis() == BasisTag::full(4));
  CHECK(cfg.resolved_post_select() == -1);  // auto: none in the full space

  cfg.basis = "sector";
  cfg.initial_state = "x00y";  // superposition pattern: no definite charge
  CHECK_THROWS_AS(cfg.resolved_basis(), ConfigError);
  cfg.basis = "auto";
  CHECK(cfg.resolved_basis() == BasisTag::full(4));
}

TEST_CASE("post_select accepts auto, none and explicit weights", "[config]") {
  json doc = minimal_dt();
  doc["post_select"] = "none";
  CHECK(ExperimentConfig::from_json(doc).resolved_post_select() == -1);
  doc["post_select"] = 3;
  CHECK(ExperimentConfig::from_json(doc).resolved_post_select() == 3);
  doc["post_select"] = "sometimes";
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), ConfigError);
  doc["post_select"] = 20;  // exceeds the 14-site bath
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), ConfigError);
}

TEST_CASE("evolution block parses methods and the trotter step", "[config]") {
  json doc = minimal_dt();
  doc["evolution"] = {{"method", "chebyshev"},
                      {"tolerance", 1e-10},
                      {"trotter_dt_ns", 0.2},
                      {"krylov_dim", 24}};
  const ExperimentConfig cfg = ExperimentConfig::from_json(doc);
  CHECK(cfg.evolution.method == EvolveMethod::kChebyshev);
  CHECK(cfg.evolution.tolerance == 1e-10);
  CHECK(cfg.evolution.trotter_dt == Catch::Approx(0.2e-9));
  CHECK(cfg.evolution.krylov_dim == 24);

  doc["evolution"] = {{"method", "magic"}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), ConfigError);
}

TEST_CASE("parameter ranges are validated", "[config]") {
  json doc = minimal_dt();
  doc["k_max"] = 7;
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), ConfigError);
  doc["k_max"] = 0;
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), ConfigError);
  doc = minimal_dt();
  doc["p_floor"] = 1.0;
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), ConfigError);
  doc = minimal_dt();
  doc["e0"] = 0.0;
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), ConfigError);
  doc = minimal_dt();
  doc["schema_version"] = 2;
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"mode", "exact"}}),
                  ConfigError);  // experiment is mandatory
}

TEST_CASE("confusion accepts ideal or explicit fidelities", "[config]") {
  json doc = minimal_dt();
  doc["mode"] = "shots";
  doc["confusion"] = "ideal";
  CHECK(ExperimentConfig::from_json(doc).resolved_confusion().is_ideal());

  doc["confusion"] = {{"f00", 0.95}, {"f11", 0.9}};
  const ExperimentConfig cfg = ExperimentConfig::from_json(doc);
  CHECK(cfg.resolved_confusion().f00(0) == 0.95);
  CHECK(cfg.resolved_confusion().f11(3) == 0.9);

  doc["confusion"] = {{"f00", 1.5}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), ParameterError);

  doc["confusion"] = 17;
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), ConfigError);
}
