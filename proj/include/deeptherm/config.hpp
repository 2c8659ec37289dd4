// Copyright 2026 The deeptherm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deeptherm/common.hpp"
#include "deeptherm/ensemble.hpp"
#include "deeptherm/evolution.hpp"
#include "deeptherm/lattice.hpp"
#include "deeptherm/measurement.hpp"
#include "deeptherm/noise.hpp"
#include "deeptherm/state.hpp"

/**
 * Run configuration for the three experiment families:
 *  - ergodicity:           excitation densities, Porter-Thomas statistics,
 *                          conditional probabilities (exact or shots).
 *  - deep_thermalization:  projected-ensemble moments vs. the Haar ensemble
 *                          (exact, shots, or noisy trajectories).
 *  - leakage:              ensemble-averaged entropy growth under dephasing
 *                          and the many-body leakage-time fit (noisy).
 *
 * Configs are JSON documents; `from_json` validates eagerly and error
 * messages name the offending key.  `to_json` re-emits the fully resolved
 * configuration (all defaults filled in) minus execution-only fields
 * (worker count, output directory), so re-running a resolved config
 * reproduces the original outputs byte for byte.
 */
namespace deeptherm {

enum class Experiment { kErgodicity, kDeepThermalization, kLeakage };
enum class RunMode { kExact, kShots, kNoisy };

inline Experiment parse_experiment(const std::string& text) {
  if (text == "ergodicity") return Experiment::kErgodicity;
  if (text == "deep_thermalization") return Experiment::kDeepThermalization;
  if (text == "leakage") return Experiment::kLeakage;
  throw ConfigError(
      "experiment must be ergodicity, deep_thermalization or leakage, got " +
      text);
}

inline std::string experiment_name(Experiment e) {
  switch (e) {
    case Experiment::kErgodicity:
      return "ergodicity";
    case Experiment::kDeepThermalization:
      return "deep_thermalization";
    case Experiment::kLeakage:
      return "leakage";
  }
  return "?";
}

inline RunMode parse_run_mode(const std::string& text) {
  if (text == "exact") return RunMode::kExact;
  if (text == "shots") return RunMode::kShots;
  if (text == "noisy") return RunMode::kNoisy;
  throw ConfigError("mode must be exact, shots or noisy, got " + text);
}

inline std::string run_mode_name(RunMode m) {
  switch (m) {
    case RunMode::kExact:
      return "exact";
    case RunMode::kShots:
      return "shots";
    case RunMode::kNoisy:
      return "noisy";
  }
  return "?";
}

inline std::string mitigation_mode_name(MitigationMode m) {
  switch (m) {
    case MitigationMode::kInverse:
      return "inverse";
    case MitigationMode::kAsWritten:
      return "as-written";
    case MitigationMode::kNone:
      return "none";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Time grid.
// ---------------------------------------------------------------------------

/**
 * Evolution-time grid [ns]: named snapshot times (where per-time artifacts
 * such as histograms, Bloch tables and tomography runs are emitted) merged
 * with an optional linear ramp 0..t_max used for time-series curves.
 */
struct TimeGridConfig {
  std::vector<double> snapshots_ns{2.0, 50.0, 306.0};
  int linear_points = 20;
  double t_max_ns = 500.0;

  std::vector<double> resolve_ns() const {
    std::vector<double> grid = snapshots_ns;
    if (linear_points > 0) {
      for (int i = 0; i < linear_points; ++i)
        grid.push_back(t_max_ns * i / (linear_points - 1));
    }
    std::sort(grid.begin(), grid.end());
    std::vector<double> out;
    for (double t : grid)
      if (out.empty() || t - out.back() > 1e-9) out.push_back(t);
    return out;
  }

  static TimeGridConfig from_json(const nlohmann::json& doc) {
    TimeGridConfig grid;
    if (doc.is_array()) {
      grid.snapshots_ns = doc.get<std::vector<double>>();
      grid.linear_points = 0;
      if (grid.snapshots_ns.empty())
        throw ConfigError("time_grid_ns: explicit grid must not be empty");
      for (std::size_t i = 0; i + 1 < grid.snapshots_ns.size(); ++i)
        if (grid.snapshots_ns[i + 1] <= grid.snapshots_ns[i])
          throw ConfigError(
              "time_grid_ns: explicit grid must be strictly increasing");
      return grid;
    }
    if (!doc.is_object())
      throw ConfigError("time_grid_ns must be an array or an object");
    if (doc.contains("snapshots_ns"))
      grid.snapshots_ns = doc["snapshots_ns"].get<std::vector<double>>();
    if (doc.contains("linear_points"))
      grid.linear_points = doc["linear_points"].get<int>();
    if (doc.contains("t_max_ns"))
      grid.t_max_ns = doc["t_max_ns"].get<double>();
    if (grid.linear_points == 1 || grid.linear_points < 0)
      throw ConfigError("time_grid_ns.linear_points must be 0 or >= 2");
    if (grid.linear_points > 0 && grid.t_max_ns <= 0.0)
      throw ConfigError("time_grid_ns.t_max_ns must be > 0");
    for (double t : grid.snapshots_ns)
      if (t < 0.0) throw ConfigError("time_grid_ns: snapshots must be >= 0");
    if (grid.snapshots_ns.empty() && grid.linear_points == 0)
      throw ConfigError("time_grid_ns: grid is empty");
    return grid;
  }

  nlohmann::json to_json() const {
    nlohmann::json doc;
    doc["snapshots_ns"] = snapshots_ns;
    doc["linear_points"] = linear_points;
    doc["t_max_ns"] = t_max_ns;
    return doc;
  }
};

// ---------------------------------------------------------------------------
// Noise channels.
// ---------------------------------------------------------------------------

/// One dephasing channel of a run: a spectral shape plus either a direct
/// strength or a target T2* from which the strength is calibrated.
struct NoiseChannelConfig {
  std::string label = "none";  // white | one_over_f | none (output row key)
  NoiseSpec spec;              // strength 0 until resolved for t2star inputs
  double t2star_us = 0.0;      // > 0 requests calibration

  bool is_none() const { return label == "none"; }

  static NoiseChannelConfig from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("kind"))
      throw ConfigError("noise entries must be objects with a kind field");
    NoiseChannelConfig channel;
    const std::string kind = doc["kind"].get<std::string>();
    channel.label = kind == "1/f" ? "one_over_f" : kind;
    channel.spec = NoiseSpec::from_json(doc);
    if (doc.contains("t2star_us"))
      channel.t2star_us = doc["t2star_us"].get<double>();
    if (channel.is_none()) {
      if (channel.spec.strength != 0.0 || channel.t2star_us != 0.0)
        throw ConfigError("noise: kind none cannot carry a strength or T2*");
      return channel;
    }
    if (channel.t2star_us < 0.0)
      throw ConfigError("noise.t2star_us must be >= 0");
    const bool has_strength = channel.spec.strength > 0.0;
    const bool has_t2star = channel.t2star_us > 0.0;
    if (has_strength == has_t2star)
      throw ConfigError(
          "noise: give exactly one of strength or t2star_us per channel");
    return channel;
  }

  nlohmann::json to_json() const {
    if (is_none()) return nlohmann::json{{"kind", "none"}};
    nlohmann::json doc = spec.to_json();
    if (t2star_us > 0.0) doc["t2star_us"] = t2star_us;
    return doc;
  }
};

// ---------------------------------------------------------------------------
// The run configuration.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  static constexpr int kSchemaVersion = 1;

  Experiment experiment = Experiment::kDeepThermalization;
  LatticeSpec lattice{4, 4};
  std::string initial_state = "neel";
  std::string basis = "auto";  // auto | sector | full
  std::vector<int> subsystem_a{5, 6};

  /// Bath-charge post-selection: -2 auto (sector charge - 1; none for
  /// full-basis states), -1 none, >= 0 explicit weight.
  int post_select = -2;
  std::string zb_pattern = "10";  // ergodicity conditional pattern on A

  TimeGridConfig time_grid;
  RunMode mode = RunMode::kExact;

  long long shots_per_basis = 0;  // 0 = size-based default
  bool confusion_ideal = false;
  double confusion_f00 = 0.996;
  double confusion_f11 = 0.975;
  MitigationMode mitigation = MitigationMode::kInverse;
  double selection_threshold = 80.0;

  std::vector<NoiseChannelConfig> noise;
  int trajectories = 200;
  int trajectory_block = 8;  // fixed reduction block (determinism)

  double p_floor = 1e-6;
  int k_max = 4;
  double e0 = std::numbers::ln2;

  EvolutionConfig evolution;
  std::uint64_t seed = 42;

  // Execution-only knobs, excluded from the resolved-config JSON.
  int workers = 0;
  std::string output_dir = "out";

  int n_sites() const { return lattice.sites(); }

  /// Sector basis when the (resolved) pattern has definite charge and the
  /// basis choice allows it, otherwise the full 2^N space.
  BasisTag resolved_basis() const {
    const std::string pattern =
        resolve_pattern(initial_state, n_sites());
    const bool definite =
        std::all_of(pattern.begin(), pattern.end(),
                    [](char c) { return c == '0' || c == '1'; });
    if (basis == "full") return BasisTag::full(n_sites());
    if (basis == "sector") {
      if (!definite)
        throw ConfigError("basis: sector requires a definite-charge pattern");
      const int q = static_cast<int>(
          std::count(pattern.begin(), pattern.end(), '1'));
      return BasisTag::sector(n_sites(), q);
    }
    if (basis != "auto")
      throw ConfigError("basis must be auto, sector or full, got " + basis);
    if (!definite) return BasisTag::full(n_sites());
    const int q =
        static_cast<int>(std::count(pattern.begin(), pattern.end(), '1'));
    return BasisTag::sector(n_sites(), q);
  }

  /// -1 = no post-selection, otherwise the bath charge to keep.
  int resolved_post_select() const {
    if (post_select != -2) return post_select;
    const BasisTag tag = resolved_basis();
    return tag.is_sector() ? tag.excitations - 1 : -1;
  }

  long long resolved_shots() const {
    if (shots_per_basis > 0) return shots_per_basis;
    return n_sites() <= 9 ? 80000 : 200000;
  }

  ConfusionMatrix resolved_confusion() const {
    return confusion_ideal
               ? ConfusionMatrix::ideal(n_sites())
               : ConfusionMatrix::uniform(n_sites(), confusion_f00,
                                          confusion_f11);
  }

  void validate() const {
    const int n = n_sites();
    const std::string pattern = resolve_pattern(initial_state, n);
    if (static_cast<int>(pattern.size()) != n)
      throw ConfigError("initial_state pattern length does not match the " +
                        std::to_string(n) + "-site lattice");
    if (pattern.find_first_not_of("01xy") != std::string::npos)
      throw ConfigError("initial_state pattern characters must be 0/1/x/y");
    const BasisTag tag = resolved_basis();
    (void)tag;

    check_subsystem(subsystem_a, n);
    // Tomography and charge-block post-selection are built for a two-site
    // A; the leakage benchmark also admits a single probe qubit.
    const bool single_ok = experiment == Experiment::kLeakage;
    if (subsystem_a.size() != 2 && !(single_ok && subsystem_a.size() == 1))
      throw ConfigError(experiment == Experiment::kLeakage
                            ? "subsystem_a must list one or two sites"
                            : "subsystem_a must list exactly two sites");

    if (experiment == Experiment::kErgodicity) {
      if (mode == RunMode::kNoisy)
        throw ConfigError("ergodicity supports exact or shots mode");
      if (zb_pattern.size() != subsystem_a.size() ||
          zb_pattern.find_first_not_of("01") != std::string::npos)
        throw ConfigError(
            "zb_pattern must be a 0/1 string matching subsystem_a");
    }
    if (experiment == Experiment::kLeakage && mode != RunMode::kNoisy)
      throw ConfigError("leakage requires noisy mode");

    if (mode == RunMode::kNoisy) {
      if (noise.empty())
        throw ConfigError("noisy mode requires at least one noise channel");
      if (experiment == Experiment::kDeepThermalization && noise.size() != 1)
        throw ConfigError(
            "deep_thermalization noisy mode takes exactly one noise channel");
      if (trajectories < 1)
        throw ConfigError("trajectories must be >= 1 in noisy mode");
      if (trajectory_block < 1)
        throw ConfigError("trajectory_block must be >= 1");
      if (evolution.trotter_dt <= 0.0)
        throw ConfigError("evolution.trotter_dt_ns must be > 0");
    } else if (!noise.empty()) {
      throw ConfigError("noise channels require noisy mode");
    }

    if (mode == RunMode::kShots) {
      if (resolved_shots() < 1)
        throw ConfigError("shots_per_basis must be >= 1");
      if (selection_threshold <= 0.0)
        throw ConfigError("selection_threshold must be > 0");
      resolved_confusion();  // range-checks f00/f11
    }

    const int weight = resolved_post_select();
    if (weight < -1 || weight > n - static_cast<int>(subsystem_a.size()))
      throw ConfigError("post_select weight exceeds the bath size");
    if (p_floor < 0.0 || p_floor >= 1.0)
      throw ConfigError("p_floor must lie in [0, 1)");
    if (k_max < 1 || k_max > 6)
      throw ConfigError("k_max must lie in 1..6");
    if (e0 <= 0.0) throw ConfigError("e0 must be > 0");
    if (workers < 0) throw ConfigError("workers must be >= 0");

    const std::vector<double> grid = time_grid.resolve_ns();
    if (grid.empty()) throw ConfigError("time grid is empty");
  }

  static ExperimentConfig from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
      (void)value;
      static const char* known[] = {
          "schema_version", "experiment",      "lattice",
          "initial_state",  "basis",           "subsystem_a",
          "post_select",    "zb_pattern",      "time_grid_ns",
          "mode",           "shots_per_basis", "confusion",
          "mitigation",     "selection_threshold", "noise",
          "trajectories",   "trajectory_block", "p_floor",
          "k_max",          "e0",              "evolution",
          "seed",           "workers",         "output_dir"};
      if (std::find_if(std::begin(known), std::end(known), [&](const char* k) {
            return key == k;
          }) == std::end(known))
        throw ConfigError("unknown config key: " + key);
    }

    ExperimentConfig cfg;
    if (doc.contains("schema_version") &&
        doc["schema_version"].get<int>() != kSchemaVersion)
      throw ConfigError("unsupported schema_version");
    if (!doc.contains("experiment"))
      throw ConfigError("config requires an experiment field");
    cfg.experiment = parse_experiment(doc["experiment"].get<std::string>());
    if (doc.contains("lattice"))
      cfg.lattice = LatticeSpec::from_json(doc["lattice"]);
    if (doc.contains("initial_state"))
      cfg.initial_state = doc["initial_state"].get<std::string>();
    if (doc.contains("basis")) cfg.basis = doc["basis"].get<std::string>();
    if (doc.contains("subsystem_a"))
      cfg.subsystem_a = doc["subsystem_a"].get<std::vector<int>>();
    if (doc.contains("post_select")) {
      const auto& ps = doc["post_select"];
      if (ps.is_string()) {
        const std::string text = ps.get<std::string>();
        if (text == "auto")
          cfg.post_select = -2;
        else if (text == "none")
          cfg.post_select = -1;
        else
          throw ConfigError("post_select must be auto, none or an integer");
      } else if (ps.is_number_integer()) {
        cfg.post_select = ps.get<int>();
        if (cfg.post_select < 0)
          throw ConfigError("post_select weight must be >= 0");
      } else {
        throw ConfigError("post_select must be auto, none or an integer");
      }
    }
    if (doc.contains("zb_pattern"))
      cfg.zb_pattern = doc["zb_pattern"].get<std::string>();
    if (doc.contains("time_grid_ns"))
      cfg.time_grid = TimeGridConfig::from_json(doc["time_grid_ns"]);
    if (doc.contains("mode"))
      cfg.mode = parse_run_mode(doc["mode"].get<std::string>());
    if (doc.contains("shots_per_basis"))
      cfg.shots_per_basis = doc["shots_per_basis"].get<long long>();
    if (doc.contains("confusion")) {
      const auto& conf = doc["confusion"];
      if (conf.is_string() && conf.get<std::string>() == "ideal") {
        cfg.confusion_ideal = true;
      } else if (conf.is_object()) {
        if (conf.contains("f00")) cfg.confusion_f00 = conf["f00"].get<double>();
        if (conf.contains("f11")) cfg.confusion_f11 = conf["f11"].get<double>();
      } else {
        throw ConfigError("confusion must be \"ideal\" or {f00, f11}");
      }
    }
    if (doc.contains("mitigation"))
      cfg.mitigation =
          parse_mitigation_mode(doc["mitigation"].get<std::string>());
    if (doc.contains("selection_threshold"))
      cfg.selection_threshold = doc["selection_threshold"].get<double>();
    if (doc.contains("noise")) {
      const auto& noise = doc["noise"];
      if (noise.is_array()) {
        for (const auto& entry : noise)
          cfg.noise.push_back(NoiseChannelConfig::from_json(entry));
      } else {
        cfg.noise.push_back(NoiseChannelConfig::from_json(noise));
      }
    }
    if (doc.contains("trajectories"))
      cfg.trajectories = doc["trajectories"].get<int>();
    if (doc.contains("trajectory_block"))
      cfg.trajectory_block = doc["trajectory_block"].get<int>();
    if (doc.contains("p_floor")) cfg.p_floor = doc["p_floor"].get<double>();
    if (doc.contains("k_max")) cfg.k_max = doc["k_max"].get<int>();
    if (doc.contains("e0")) cfg.e0 = doc["e0"].get<double>();
    if (doc.contains("evolution")) {
      const auto& evo = doc["evolution"];
      if (!evo.is_object()) throw ConfigError("evolution must be an object");
      if (evo.contains("method")) {
        const std::string m = evo["method"].get<std::string>();
        if (m == "krylov")
          cfg.evolution.method = EvolveMethod::kKrylov;
        else if (m == "chebyshev")
          cfg.evolution.method = EvolveMethod::kChebyshev;
        else if (m == "dense")
          cfg.evolution.method = EvolveMethod::kDenseEig;
        else
          throw ConfigError(
              "evolution.method must be krylov, chebyshev or dense");
      }
      if (evo.contains("tolerance"))
        cfg.evolution.tolerance = evo["tolerance"].get<double>();
      if (evo.contains("trotter_dt_ns"))
        cfg.evolution.trotter_dt = evo["trotter_dt_ns"].get<double>() *
                                   kSecPerNs;
      if (evo.contains("krylov_dim"))
        cfg.evolution.krylov_dim = evo["krylov_dim"].get<int>();
    }
    if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("workers")) cfg.workers = doc["workers"].get<int>();
    if (doc.contains("output_dir"))
      cfg.output_dir = doc["output_dir"].get<std::string>();

    cfg.validate();
    return cfg;
  }

  /// Resolved configuration (defaults filled in, noise strengths as given);
  /// excludes execution-only fields so outputs stay byte-identical across
  /// worker counts and output locations.
  nlohmann::json to_json() const {
    nlohmann::json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["experiment"] = experiment_name(experiment);
    doc["lattice"] = lattice.to_json();
    doc["initial_state"] = initial_state;
    doc["basis"] = resolved_basis().is_sector() ? "sector" : "full";
    doc["subsystem_a"] = subsystem_a;
    const int weight = resolved_post_select();
    if (weight < 0)
      doc["post_select"] = "none";
    else
      doc["post_select"] = weight;
    doc["time_grid_ns"] = time_grid.to_json();
    doc["mode"] = run_mode_name(mode);
    if (mode == RunMode::kShots) {
      doc["shots_per_basis"] = resolved_shots();
      if (confusion_ideal) {
        doc["confusion"] = "ideal";
      } else {
        doc["confusion"] = {{"f00", confusion_f00}, {"f11", confusion_f11}};
      }
      doc["mitigation"] = mitigation_mode_name(mitigation);
      doc["selection_threshold"] = selection_threshold;
    }
    if (experiment == Experiment::kErgodicity)
      doc["zb_pattern"] = zb_pattern;
    if (mode == RunMode::kNoisy) {
      doc["noise"] = nlohmann::json::array();
      for (const auto& channel : noise)
        doc["noise"].push_back(channel.to_json());
      doc["trajectories"] = trajectories;
      doc["trajectory_block"] = trajectory_block;
    }
    doc["p_floor"] = p_floor;
    doc["k_max"] = k_max;
    doc["e0"] = e0;
    doc["evolution"] = {
        {"method", evolution.method == EvolveMethod::kKrylov ? "krylov"
                   : evolution.method == EvolveMethod::kChebyshev
                       ? "chebyshev"
                       : "dense"},
        {"tolerance", evolution.tolerance},
        {"trotter_dt_ns", evolution.trotter_dt / kSecPerNs},
        {"krylov_dim", evolution.krylov_dim}};
    doc["seed"] = seed;
    return doc;
  }
};

}  // namespace deeptherm
