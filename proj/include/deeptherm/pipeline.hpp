// Copyright 2026 The deeptherm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include "deeptherm/config.hpp"
#include "deeptherm/ensemble.hpp"
#include "deeptherm/evolution.hpp"
#include "deeptherm/lattice.hpp"
#include "deeptherm/measurement.hpp"
#include "deeptherm/noise.hpp"
#include "deeptherm/state.hpp"
#include "deeptherm/stats.hpp"

/**
 * Experiment orchestration: drives the solvers over a configured time grid
 * and emits CSV/JSON artifacts plus a run manifest.
 *
 * Determinism contract: with a fixed config (including its seed), every
 * artifact is byte-identical across runs and across worker counts.  All
 * randomness flows through per-realization seeds derived from the config
 * seed, trajectory sums run over a fixed block schedule, numbers are
 * rendered with one fixed format, and nothing time- or host-dependent is
 * written.
 */
namespace deeptherm {

/// SHA-256 of a byte string, lowercase hex (run-manifest input fingerprint).
inline std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw NumericalError("sha256: cannot allocate digest context");
  const bool ok =
      EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
      EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw NumericalError("sha256: digest computation failed");
  static const char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

namespace detail {

/// splitmix64 finalizer: decorrelates per-realization RNG streams derived
/// from one config seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::string csv_field(const std::string& s) { return s; }
inline std::string csv_field(const char* s) { return s; }
inline std::string csv_field(double v) { return format_double(v); }
inline std::string csv_field(int v) { return std::to_string(v); }
inline std::string csv_field(long long v) { return std::to_string(v); }
inline std::string csv_field(std::size_t v) { return std::to_string(v); }
inline std::string csv_field(std::uint32_t v) { return std::to_string(v); }

/// Deterministic CSV assembly: fixed header, %.12g numbers, \n endings.
class CsvBuilder {
 public:
  explicit CsvBuilder(std::string header) : text_(std::move(header)) {
    text_ += '\n';
  }

  template <class... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    (
        [&] {
          if (!first) text_ += ',';
          first = false;
          text_ += csv_field(fields);
        }(),
        ...);
    text_ += '\n';
  }

  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Artifact writing.
// ---------------------------------------------------------------------------

class ArtifactWriter {
 public:
  explicit ArtifactWriter(const std::filesystem::path& dir) : dir_(dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec)
      throw ConfigError("cannot create output directory " + dir_.string() +
                        ": " + ec.message());
  }

  void write(const std::string& name, const std::string& text) {
    std::ofstream out(dir_ / name, std::ios::trunc | std::ios::binary);
    if (!out) throw ConfigError("cannot open output file " + name);
    out << text;
    if (!out) throw ConfigError("write failed for output file " + name);
    files_.push_back(name);
  }

  void write_json(const std::string& name, const nlohmann::json& doc) {
    write(name, doc.dump(2) + "\n");
  }

  const std::filesystem::path& dir() const { return dir_; }
  const std::vector<std::string>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

// ---------------------------------------------------------------------------
// Run context: lattice, basis, initial state, resolved time grid.
// ---------------------------------------------------------------------------

struct RunContext {
  ExperimentConfig cfg;
  SparseHamiltonian h;
  StateVector psi0;
  std::vector<double> grid_ns;             // resolved; snapped in noisy mode
  std::vector<std::size_t> snapshot_idx;   // indices of snapshot times
};

inline RunContext make_context(const ExperimentConfig& cfg) {
  cfg.validate();
  const BasisTag tag = cfg.resolved_basis();

  std::vector<double> grid = cfg.time_grid.resolve_ns();
  std::vector<double> snaps = cfg.time_grid.snapshots_ns;
  if (cfg.mode == RunMode::kNoisy) {
    // Noisy evolution lives on the Trotter grid; snap every requested time
    // to a whole number of steps so trajectories resume exactly.
    const double dt_ns = cfg.evolution.trotter_dt / kSecPerNs;
    const auto snap = [&](std::vector<double>& times) {
      for (double& t : times) t = std::llround(t / dt_ns) * dt_ns;
      std::vector<double> unique;
      for (double t : times)
        if (unique.empty() || t - unique.back() > 1e-12) unique.push_back(t);
      times.swap(unique);
    };
    snap(grid);
    snap(snaps);
  }

  std::vector<std::size_t> snapshot_idx;
  for (double t : snaps) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (std::abs(grid[i] - t) < 1e-9) {
        snapshot_idx.push_back(i);
        break;
      }
    }
  }
  std::sort(snapshot_idx.begin(), snapshot_idx.end());
  snapshot_idx.erase(
      std::unique(snapshot_idx.begin(), snapshot_idx.end()),
      snapshot_idx.end());

  return RunContext{cfg, build_hamiltonian(cfg.lattice, tag),
                    prepare_product_state(cfg.initial_state, tag),
                    std::move(grid), std::move(snapshot_idx)};
}

/// Walks the exact (noiseless) evolution across the grid; `visit` sees each
/// grid index with the state at that time.
inline void sweep_exact(
    const RunContext& ctx,
    const std::function<void(std::size_t, double, const StateVector&)>&
        visit) {
  StateVector psi = ctx.psi0;
  double t_prev_ns = 0.0;
  for (std::size_t i = 0; i < ctx.grid_ns.size(); ++i) {
    const double t_ns = ctx.grid_ns[i];
    if (t_ns > t_prev_ns)
      psi = evolve(psi, ctx.h, (t_ns - t_prev_ns) * kSecPerNs,
                   ctx.cfg.evolution);
    t_prev_ns = t_ns;
    visit(i, t_ns, psi);
  }
}

/**
 * Noisy trajectory sweep: averages the projected ensemble at every grid
 * time over `n_trajectories` dephasing realizations of `spec`.  Each
 * realization r draws its own noise path from seed mix(seed ^ salt, r) and
 * is evolved once across the whole grid (trajectories resume mid-path).
 * Accumulation runs over fixed trajectory blocks merged in block order, so
 * results are bit-identical for any worker count.
 */
inline std::vector<TrajectoryAccumulator> sweep_noisy(
    const RunContext& ctx, const NoiseSpec& spec, int n_trajectories,
    std::uint64_t channel_salt) {
  const ExperimentConfig& cfg = ctx.cfg;
  const double dt = cfg.evolution.trotter_dt;
  std::vector<long long> segments(ctx.grid_ns.size());
  for (std::size_t i = 0; i < ctx.grid_ns.size(); ++i)
    segments[i] = std::llround(ctx.grid_ns[i] * kSecPerNs / dt);
  const long long total_segments = segments.empty() ? 0 : segments.back();
  const double span = static_cast<double>(total_segments + 1) * dt;
  const int n_sites = cfg.n_sites();

  using Partial = std::vector<TrajectoryAccumulator>;
  Partial empty;
  empty.reserve(ctx.grid_ns.size());
  for (std::size_t i = 0; i < ctx.grid_ns.size(); ++i)
    empty.emplace_back(ctx.psi0.basis, cfg.subsystem_a);

  const auto make_block = [&](std::int64_t, std::int64_t first,
                              std::int64_t last) -> Partial {
    Partial local = empty;
    for (std::int64_t r = first; r < last; ++r) {
      const std::uint64_t seed_r = detail::mix_seed(
          cfg.seed ^ channel_salt, static_cast<std::uint64_t>(r));
      const NoiseTrajectory traj =
          sample_trajectory(spec, n_sites, dt, span, seed_r);
      StateVector psi = ctx.psi0;
      long long done = 0;
      for (std::size_t i = 0; i < ctx.grid_ns.size(); ++i) {
        if (segments[i] > done) {
          psi = evolve_noisy(psi, ctx.h, traj,
                             static_cast<double>(segments[i] - done) * dt,
                             cfg.evolution, static_cast<int>(done));
          done = segments[i];
        }
        local[i].add(psi);
      }
    }
    return local;
  };
  const auto combine = [](Partial acc, Partial part) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i].merge(part[i]);
    return acc;
  };
  return parallel_reduce_blocks(
      static_cast<std::int64_t>(n_trajectories),
      static_cast<std::int64_t>(cfg.trajectory_block), cfg.workers, empty,
      make_block, combine);
}

/// Calibrated noise spec of a channel: direct strengths pass through; T2*
/// targets resolve via the closed form (white: W = 2/T2*) or Monte-Carlo
/// Ramsey calibration (1/f), seeded deterministically from the run seed.
inline NoiseSpec resolve_channel(const NoiseChannelConfig& channel,
                                 std::uint64_t seed) {
  NoiseSpec spec = channel.spec;
  if (channel.is_none()) {
    spec.strength = 0.0;
    return spec;
  }
  if (channel.t2star_us > 0.0) {
    const double target = channel.t2star_us * kSecPerUs;
    if (spec.kind == NoiseSpec::Kind::kWhite) {
      spec.strength = 2.0 / target;
    } else {
      CalibrationOptions opt;
      opt.seed = detail::mix_seed(seed, 0xCA11B8A7Eull);
      opt.low_cut_hz = spec.low_cut_hz;
      opt.high_cut_hz = spec.high_cut_hz;
      opt.harmonics = spec.harmonics;
      spec.strength =
          calibrate_from_t2star(spec.kind, target, 5.0 * target, opt);
    }
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Deep thermalization (moment diagnostics).
// ---------------------------------------------------------------------------

struct MomentRow {
  double t_ns = 0.0;
  int entries = 0;
  double total_weight = 0.0;
  double avg_entropy = 0.0;
  std::vector<double> delta;  // [k-1], distance to the Haar moment
  std::vector<double> s;      // [k-1], moment entropy
};

struct DeepThermResult {
  int local_dim = 2;  // after post-selection
  std::vector<MomentRow> rows;
  std::vector<std::pair<double, ProjectedEnsemble>> snapshots;  // post-sel.
  ProjectedEnsemble final_ensemble;  // at the last grid time
  std::vector<MomentMatrix> final_moments;  // k = 2, 3 where available
  std::optional<NoiseSpec> resolved_noise;  // noisy mode only
};

namespace detail {

inline ProjectedEnsemble apply_post_selection(const ProjectedEnsemble& ens,
                                              int weight) {
  return weight >= 0 ? post_select(ens, weight) : ens;
}

inline MomentRow moment_row(double t_ns, const ProjectedEnsemble& ens,
                            int k_max,
                            const std::vector<MomentMatrix>& haar) {
  MomentRow row;
  row.t_ns = t_ns;
  row.entries = static_cast<int>(ens.entries.size());
  row.total_weight = ens.total_weight();
  row.avg_entropy = average_entropy(ens);
  for (int k = 1; k <= k_max; ++k) {
    const MomentMatrix m = moment_matrix(ens, k);
    row.delta.push_back(
        trace_distance(m, haar[static_cast<std::size_t>(k - 1)]));
    row.s.push_back(moment_entropy(m));
  }
  return row;
}

/// Tomographic projected ensemble from sampled + mitigated shot tables.
inline ProjectedEnsemble shots_ensemble(const RunContext& ctx,
                                        const StateVector& psi,
                                        std::uint64_t salt) {
  const ExperimentConfig& cfg = ctx.cfg;
  const ConfusionMatrix confusion = cfg.resolved_confusion();
  const long long shots = cfg.resolved_shots();

  std::vector<ShotTable> tables;
  std::uint64_t basis_index = 0;
  for (const auto& basis : tomography_bases()) {
    const std::uint64_t seed =
        detail::mix_seed(cfg.seed ^ salt, 0x700 + basis_index++);
    ShotTable table =
        sample_shots(psi, cfg.subsystem_a, basis, shots, confusion, seed);
    tables.push_back(mitigate_counts(table, confusion, cfg.mitigation));
  }

  const std::vector<int> bath =
      complement_sites(cfg.subsystem_a, cfg.n_sites());
  const std::vector<std::uint32_t> kept =
      select_bitstrings(tables, bath, cfg.selection_threshold);
  if (kept.empty())
    throw ReconstructionError(
        "shots pipeline: no bath outcome reaches the selection threshold");

  ProjectedEnsemble ens;
  ens.n_sites = cfg.n_sites();
  ens.subsystem = cfg.subsystem_a;
  ens.local_dim = 4;
  ens.source_tag = "shots";
  for (std::uint32_t z_b : kept) {
    EnsembleEntry entry;
    entry.z_b = z_b;
    entry.p = probability_of(z_b, tables, bath);
    entry.rho = tomo_reconstruct(tables, cfg.subsystem_a, z_b).rho;
    if (entry.p < cfg.p_floor) continue;
    ens.entries.push_back(std::move(entry));
  }
  if (ens.entries.empty())
    throw ReconstructionError("shots pipeline: all outcomes below p_floor");
  return ens;
}

}  // namespace detail

inline DeepThermResult run_deep_thermalization(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  if (cfg.experiment != Experiment::kDeepThermalization)
    throw ConfigError("run_deep_thermalization: wrong experiment kind");
  const int weight = cfg.resolved_post_select();

  DeepThermResult result;
  result.local_dim = weight >= 0 ? 2 : (1 << cfg.subsystem_a.size());
  std::vector<MomentMatrix> haar;
  for (int k = 1; k <= cfg.k_max; ++k)
    haar.push_back(haar_moment(result.local_dim, k));

  const auto is_snapshot = [&](std::size_t i) {
    return std::find(ctx.snapshot_idx.begin(), ctx.snapshot_idx.end(), i) !=
           ctx.snapshot_idx.end();
  };
  const std::size_t last = ctx.grid_ns.size() - 1;

  const auto consume = [&](std::size_t i, double t_ns,
                           const ProjectedEnsemble& raw) {
    const ProjectedEnsemble ens = detail::apply_post_selection(raw, weight);
    result.rows.push_back(detail::moment_row(t_ns, ens, cfg.k_max, haar));
    if (is_snapshot(i)) result.snapshots.emplace_back(t_ns, ens);
    if (i == last) {
      result.final_ensemble = ens;
      for (int k = 2; k <= std::min(3, cfg.k_max); ++k)
        result.final_moments.push_back(moment_matrix(ens, k));
    }
  };

  switch (cfg.mode) {
    case RunMode::kExact:
      sweep_exact(ctx, [&](std::size_t i, double t_ns,
                           const StateVector& psi) {
        consume(i, t_ns,
                exact_ensemble(psi, cfg.subsystem_a, cfg.p_floor));
      });
      break;
    case RunMode::kNoisy: {
      const NoiseSpec spec = resolve_channel(cfg.noise.front(), cfg.seed);
      result.resolved_noise = spec;
      const int n_traj = cfg.noise.front().is_none() ? 1 : cfg.trajectories;
      const std::vector<TrajectoryAccumulator> acc =
          sweep_noisy(ctx, spec, n_traj, 0);
      for (std::size_t i = 0; i < ctx.grid_ns.size(); ++i)
        consume(i, ctx.grid_ns[i], acc[i].finish(cfg.p_floor));
      break;
    }
    case RunMode::kShots:
      // Tomography only at snapshot times; full grids would multiply the
      // shot budget for no extra physics.
      sweep_exact(ctx, [&](std::size_t i, double t_ns,
                           const StateVector& psi) {
        if (!is_snapshot(i) && i != last) return;
        consume(i, t_ns, detail::shots_ensemble(ctx, psi, 0xD4 + i));
      });
      break;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Ergodicity diagnostics.
// ---------------------------------------------------------------------------

struct ErgodicityResult {
  std::vector<double> t_ns;                        // one per evaluated time
  std::vector<std::vector<double>> density;        // [time][site]
  std::vector<double> ks;                          // per time, vs Exp(1)
  std::vector<double> ks_chi1;                     // per time, vs chi^2_1
  std::vector<double> fitted_rate;                 // per time
  std::size_t dimension = 0;                       // D used for rescaling
  // Snapshot-only artifacts:
  std::vector<std::pair<double, PorterThomasResult>> histograms;
  std::vector<std::pair<double, ConditionalDistribution>> conditionals;
};

inline ErgodicityResult run_ergodicity(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  if (cfg.experiment != Experiment::kErgodicity)
    throw ConfigError("run_ergodicity: wrong experiment kind");
  // zb_pattern is site-indexed like initial_state: character l describes
  // subsystem site A[l] (local bit l), not an MSB-first integer.
  std::uint32_t z_a = 0;
  for (std::size_t l = 0; l < cfg.zb_pattern.size(); ++l)
    if (cfg.zb_pattern[l] == '1') z_a |= std::uint32_t{1} << l;

  ErgodicityResult result;
  result.dimension = ctx.psi0.basis.dimension();
  const auto is_snapshot = [&](std::size_t i) {
    return std::find(ctx.snapshot_idx.begin(), ctx.snapshot_idx.end(), i) !=
           ctx.snapshot_idx.end();
  };

  if (cfg.mode == RunMode::kExact) {
    sweep_exact(ctx, [&](std::size_t i, double t_ns, const StateVector& psi) {
      result.t_ns.push_back(t_ns);
      result.density.push_back(excitation_density(psi));
      PorterThomasResult pt = porter_thomas_test(psi, result.dimension);
      result.ks.push_back(pt.ks);
      result.ks_chi1.push_back(pt.ks_chi1);
      result.fitted_rate.push_back(pt.fitted_rate);
      if (is_snapshot(i)) {
        result.conditionals.emplace_back(
            t_ns, conditional_probability(psi, cfg.subsystem_a, z_a,
                                          cfg.p_floor));
        result.histograms.emplace_back(t_ns, std::move(pt));
      }
    });
    return result;
  }

  // Shots mode: one Z-basis table per snapshot; every statistic is computed
  // from (mitigated) counts.  The trailing characters of the basis label act
  // on subsystem A, where Z means no rotation, so "ZZ" samples the plain
  // computational basis of the whole register.
  const ConfusionMatrix confusion = cfg.resolved_confusion();
  const long long shots = cfg.resolved_shots();
  const SectorBasis* sector = nullptr;
  std::optional<SectorBasis> sector_store;
  if (ctx.psi0.basis.is_sector()) {
    sector_store.emplace(ctx.psi0.basis.n_sites, ctx.psi0.basis.excitations);
    sector = &*sector_store;
  }
  std::uint64_t snap_counter = 0;
  sweep_exact(ctx, [&](std::size_t i, double t_ns, const StateVector& psi) {
    if (!is_snapshot(i)) return;
    const std::uint64_t seed =
        detail::mix_seed(cfg.seed, 0xE7600 + snap_counter++);
    ShotTable table = sample_shots(psi, cfg.subsystem_a, "ZZ", shots,
                                   confusion, seed);
    table = mitigate_counts(table, confusion, cfg.mitigation);
    const double total = table.total();

    result.t_ns.push_back(t_ns);
    std::vector<double> density(static_cast<std::size_t>(cfg.n_sites()), 0.0);
    for (const auto& [s, c] : table.counts)
      for (int j = 0; j < cfg.n_sites(); ++j)
        if (bit_at(s, j)) density[static_cast<std::size_t>(j)] += c / total;
    result.density.push_back(std::move(density));

    // Probabilities over the accessible space; out-of-sector strings from
    // residual readout error are structural zeros and excluded.
    std::vector<double> probs(result.dimension, 0.0);
    for (const auto& [s, c] : table.counts) {
      const std::int64_t r =
          sector ? sector->rank(s) : static_cast<std::int64_t>(s);
      if (r >= 0 && r < static_cast<std::int64_t>(result.dimension))
        probs[static_cast<std::size_t>(r)] = c / total;
    }
    PorterThomasResult pt = porter_thomas_test(probs, result.dimension);
    result.ks.push_back(pt.ks);
    result.ks_chi1.push_back(pt.ks_chi1);
    result.fitted_rate.push_back(pt.fitted_rate);
    result.histograms.emplace_back(t_ns, std::move(pt));
    result.conditionals.emplace_back(
        t_ns, conditional_probability(table.counts, cfg.n_sites(),
                                      cfg.subsystem_a, z_a,
                                      cfg.selection_threshold));
  });
  return result;
}

// ---------------------------------------------------------------------------
// Information-leakage benchmark.
// ---------------------------------------------------------------------------

struct LeakageChannelResult {
  std::string label;
  NoiseSpec spec;          // resolved strength
  double t2star_us = 0.0;  // calibration target, if one was given
  std::vector<double> entropy;  // Ē_A per grid time
  std::optional<LeakageFit> fit;
  std::string fit_error;
  std::vector<std::pair<double, double>> residuals;  // (t_ns, E - fit)
};

struct LeakageResult {
  std::vector<double> t_ns;
  std::vector<LeakageChannelResult> channels;
};

inline LeakageResult run_leakage_benchmark(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  if (cfg.experiment != Experiment::kLeakage)
    throw ConfigError("run_leakage_benchmark: wrong experiment kind");

  LeakageResult result;
  result.t_ns = ctx.grid_ns;
  for (std::size_t c = 0; c < cfg.noise.size(); ++c) {
    const NoiseChannelConfig& channel = cfg.noise[c];
    LeakageChannelResult out;
    out.label = channel.label;
    out.t2star_us = channel.t2star_us;
    out.spec = resolve_channel(channel, cfg.seed);
    // A noiseless channel has identical trajectories; one realization is
    // the exact average.
    const int n_traj = channel.is_none() ? 1 : cfg.trajectories;
    const std::vector<TrajectoryAccumulator> acc =
        sweep_noisy(ctx, out.spec, n_traj, 0xC0 + c);
    for (const auto& a : acc)
      out.entropy.push_back(average_entropy(a.finish(cfg.p_floor)));

    if (!channel.is_none()) {
      std::vector<double> t_s(ctx.grid_ns.size());
      for (std::size_t i = 0; i < ctx.grid_ns.size(); ++i)
        t_s[i] = ctx.grid_ns[i] * kSecPerNs;
      try {
        const LeakageFit fit = fit_leakage_time(t_s, out.entropy, cfg.e0);
        out.fit = fit;
        for (std::size_t i = 0; i < t_s.size(); ++i) {
          if (out.entropy[i] > 0.5 * cfg.e0) continue;  // the fit window
          out.residuals.emplace_back(
              ctx.grid_ns[i],
              out.entropy[i] - (fit.intercept + fit.slope * t_s[i]));
        }
      } catch (const FitError& err) {
        out.fit_error = err.what();
      }
    }
    result.channels.push_back(std::move(out));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Artifact emission.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string time_token(double t_ns) {
  std::string token = format_double(t_ns);
  for (char& ch : token)
    if (ch == '.') ch = 'p';  // filesystem-friendly
  return token;
}

inline nlohmann::json moment_matrix_json(double t_ns, const MomentMatrix& m) {
  nlohmann::json doc;
  doc["schema_version"] = ExperimentConfig::kSchemaVersion;
  doc["t_ns"] = t_ns;
  doc["k"] = m.order;
  doc["dim"] = m.mat.rows();
  nlohmann::json re = nlohmann::json::array();
  nlohmann::json im = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.mat.rows(); ++r) {
    nlohmann::json re_row = nlohmann::json::array();
    nlohmann::json im_row = nlohmann::json::array();
    for (Eigen::Index col = 0; col < m.mat.cols(); ++col) {
      re_row.push_back(m.mat(r, col).real());
      im_row.push_back(m.mat(r, col).imag());
    }
    re.push_back(std::move(re_row));
    im.push_back(std::move(im_row));
  }
  doc["re"] = std::move(re);
  doc["im"] = std::move(im);
  return doc;
}

}  // namespace detail

inline void write_deep_thermalization(ArtifactWriter& writer,
                                      const RunContext& ctx,
                                      const DeepThermResult& result) {
  const ExperimentConfig& cfg = ctx.cfg;
  detail::CsvBuilder moments("t_ns,k,delta_k,s_k,s_over_ln_kp1");
  for (const MomentRow& row : result.rows)
    for (int k = 1; k <= cfg.k_max; ++k) {
      const auto i = static_cast<std::size_t>(k - 1);
      moments.row(row.t_ns, k, row.delta[i], row.s[i],
                  row.s[i] / std::log(k + 1.0));
    }
  writer.write("moments.csv", moments.str());

  detail::CsvBuilder summary("t_ns,entries,total_weight,avg_entropy");
  for (const MomentRow& row : result.rows)
    summary.row(row.t_ns, row.entries, row.total_weight, row.avg_entropy);
  writer.write("ensemble_summary.csv", summary.str());

  if (result.local_dim == 2) {
    const int n_bath =
        cfg.n_sites() - static_cast<int>(cfg.subsystem_a.size());
    detail::CsvBuilder bloch("t_ns,z_b,p,x,y,z");
    for (const auto& [t_ns, ens] : result.snapshots)
      for (const EnsembleEntry& entry : ens.entries) {
        const auto v = bloch_vector(entry.rho);
        bloch.row(t_ns, format_bits(entry.z_b, n_bath), entry.p, v[0], v[1],
                  v[2]);
      }
    writer.write("bloch.csv", bloch.str());
  }

  for (const MomentMatrix& m : result.final_moments)
    writer.write_json("moment_matrix_k" + std::to_string(m.order) + ".json",
                      detail::moment_matrix_json(result.rows.back().t_ns, m));
  writer.write_json("ensemble_final.json", result.final_ensemble.to_json());
}

inline void write_ergodicity(ArtifactWriter& writer, const RunContext& ctx,
                             const ErgodicityResult& result) {
  const ExperimentConfig& cfg = ctx.cfg;
  detail::CsvBuilder density("t_ns,site,n_j");
  for (std::size_t i = 0; i < result.t_ns.size(); ++i)
    for (int j = 0; j < cfg.n_sites(); ++j)
      density.row(result.t_ns[i], j,
                  result.density[i][static_cast<std::size_t>(j)]);
  writer.write("density.csv", density.str());

  detail::CsvBuilder pt("t_ns,ks,ks_chi1,fitted_rate,dimension");
  for (std::size_t i = 0; i < result.t_ns.size(); ++i)
    pt.row(result.t_ns[i], result.ks[i], result.ks_chi1[i],
           result.fitted_rate[i], result.dimension);
  writer.write("porter_thomas.csv", pt.str());

  detail::CsvBuilder dp("t_ns,dp_value");
  for (const auto& [t_ns, hist] : result.histograms)
    for (double x : hist.samples) dp.row(t_ns, x);
  writer.write("dp_values.csv", dp.str());

  for (const auto& [t_ns, hist] : result.histograms) {
    detail::CsvBuilder bins("bin_lo,bin_hi,density");
    for (std::size_t b = 0; b + 1 < hist.bin_edges.size(); ++b)
      bins.row(hist.bin_edges[b], hist.bin_edges[b + 1],
               hist.bin_density[b]);
    writer.write("histogram_t" + detail::time_token(t_ns) + "ns.csv",
                 bins.str());
  }

  const int n_bath = cfg.n_sites() - static_cast<int>(cfg.subsystem_a.size());
  detail::CsvBuilder conditional("t_ns,z_b,p_conditional");
  for (const auto& [t_ns, dist] : result.conditionals)
    for (const auto& [z_b, p] : dist.entries)
      conditional.row(t_ns, format_bits(z_b, n_bath), p);
  writer.write("conditional.csv", conditional.str());
}

inline void write_leakage(ArtifactWriter& writer, const RunContext& ctx,
                          const LeakageResult& result) {
  detail::CsvBuilder leakage("t_ns,channel,avg_entropy");
  for (const LeakageChannelResult& channel : result.channels)
    for (std::size_t i = 0; i < result.t_ns.size(); ++i)
      leakage.row(result.t_ns[i], channel.label, channel.entropy[i]);
  writer.write("leakage.csv", leakage.str());

  nlohmann::json fits;
  fits["schema_version"] = ExperimentConfig::kSchemaVersion;
  fits["e0"] = ctx.cfg.e0;
  fits["channels"] = nlohmann::json::array();
  for (const LeakageChannelResult& channel : result.channels) {
    nlohmann::json doc;
    doc["label"] = channel.label;
    doc["strength"] = channel.spec.strength;
    if (channel.t2star_us > 0.0) doc["t2star_us"] = channel.t2star_us;
    if (channel.fit) {
      doc["tau_us"] = channel.fit->tau / kSecPerUs;
      doc["slope_per_s"] = channel.fit->slope;
      doc["intercept"] = channel.fit->intercept;
      doc["r2"] = channel.fit->r2;
      doc["window_points"] = channel.fit->window_points;
      nlohmann::json residuals = nlohmann::json::array();
      for (const auto& [t_ns, r] : channel.residuals)
        residuals.push_back({t_ns, r});
      doc["residuals"] = std::move(residuals);
    } else if (!channel.fit_error.empty()) {
      doc["fit_error"] = channel.fit_error;
    }
    fits["channels"].push_back(std::move(doc));
  }
  writer.write_json("leakage_fit.json", fits);
}

// ---------------------------------------------------------------------------
// Entry point.
// ---------------------------------------------------------------------------

struct RunResult {
  std::filesystem::path out_dir;
  std::vector<std::string> files;
  nlohmann::json manifest;
};

/**
 * Runs the configured experiment and writes every artifact plus a run
 * manifest (resolved config, input fingerprint, output list) into
 * cfg.output_dir.  `config_bytes` is the raw input document being
 * fingerprinted — pass the config file's exact bytes.
 */
inline RunResult run_experiment(const ExperimentConfig& cfg,
                                const std::string& config_bytes) {
  const RunContext ctx = make_context(cfg);
  ArtifactWriter writer(cfg.output_dir);

  ExperimentConfig resolved = cfg;
  switch (cfg.experiment) {
    case Experiment::kDeepThermalization: {
      const DeepThermResult result = run_deep_thermalization(ctx);
      if (result.resolved_noise) {
        // Freeze the calibrated strength into the resolved config so a
        // re-run of the manifest skips calibration yet matches exactly.
        resolved.noise.front().spec = *result.resolved_noise;
        resolved.noise.front().t2star_us = 0.0;
      }
      write_deep_thermalization(writer, ctx, result);
      break;
    }
    case Experiment::kErgodicity:
      write_ergodicity(writer, ctx, run_ergodicity(ctx));
      break;
    case Experiment::kLeakage: {
      const LeakageResult result = run_leakage_benchmark(ctx);
      for (std::size_t c = 0; c < result.channels.size(); ++c) {
        resolved.noise[c].spec = result.channels[c].spec;
        resolved.noise[c].t2star_us = 0.0;
      }
      write_leakage(writer, ctx, result);
      break;
    }
  }

  nlohmann::json manifest;
  manifest["schema_version"] = ExperimentConfig::kSchemaVersion;
  manifest["tool"] = {{"name", "deeptherm"}, {"version", "0.1.0"}};
  manifest["input"] = {{"sha256", sha256_hex(config_bytes)},
                       {"bytes", config_bytes.size()}};
  manifest["resolved_config"] = resolved.to_json();
  manifest["outputs"] = writer.files();
  writer.write_json("manifest.json", manifest);

  RunResult result;
  result.out_dir = writer.dir();
  result.files = writer.files();
  result.manifest = std::move(manifest);
  return result;
}

}  // namespace deeptherm
