// Copyright 2026 The deeptherm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deeptherm/common.hpp"
#include "deeptherm/ensemble.hpp"
#include "deeptherm/state.hpp"

/**
 * Finite-shot measurement emulation and its inversion back to states.
 *
 * A tomography run measures subsystem A in all nine two-qubit Pauli bases
 * {X,Y,Z}^2 while the bath B stays computational.  Basis changes map the
 * measured Pauli onto Z: X via R_y(-pi/2), Y via R_x(+pi/2); outcome bit 0
 * is the +1 eigenvalue.  Basis label character i rotates qubit A[i].
 *
 * Readout errors use the product confusion model: per qubit,
 * P(observe 0 | true 0) = F00 and P(observe 1 | true 1) = F11.  Mitigation
 * either applies the confusion map as written or its inverse (per-qubit
 * factors); inverse-mitigated counts are clipped at zero and renormalized
 * to the original shot total.
 */
namespace deeptherm {

// ---------------------------------------------------------------------------
// Confusion model.
// ---------------------------------------------------------------------------

class ConfusionMatrix {
 public:
  /// Same (F00, F11) on every qubit.
  static ConfusionMatrix uniform(int n_qubits, double f00, double f11) {
    ConfusionMatrix c;
    c.f00_.assign(static_cast<std::size_t>(n_qubits), f00);
    c.f11_.assign(static_cast<std::size_t>(n_qubits), f11);
    c.validate();
    return c;
  }

  static ConfusionMatrix ideal(int n_qubits) {
    return uniform(n_qubits, 1.0, 1.0);
  }

  int qubits() const { return static_cast<int>(f00_.size()); }
  double f00(int q) const { return f00_[static_cast<std::size_t>(q)]; }
  double f11(int q) const { return f11_[static_cast<std::size_t>(q)]; }

  bool is_ideal() const {
    for (std::size_t q = 0; q < f00_.size(); ++q)
      if (f00_[q] != 1.0 || f11_[q] != 1.0) return false;
    return true;
  }

  void validate() const {
    if (f00_.empty())
      throw ParameterError("ConfusionMatrix: needs at least one qubit");
    for (std::size_t q = 0; q < f00_.size(); ++q)
      if (f00_[q] < 0.0 || f00_[q] > 1.0 || f11_[q] < 0.0 || f11_[q] > 1.0)
        throw ParameterError(
            "ConfusionMatrix: fidelities must lie in [0, 1]");
  }

 private:
  std::vector<double> f00_;
  std::vector<double> f11_;
};

// ---------------------------------------------------------------------------
// Shot tables.
// ---------------------------------------------------------------------------

struct ShotTable {
  int n_sites = 0;
  std::string basis;  // two characters over {X, Y, Z}; char i acts on A[i]
  double shots = 0.0;
  std::map<std::uint32_t, double> counts;  // full bitstring -> count

  double total() const {
    double acc = 0.0;
    for (const auto& [s, c] : counts) acc += c;
    return acc;
  }
};

inline void check_basis_label(const std::string& basis) {
  if (basis.size() != 2)
    throw ParameterError("basis label must have two characters");
  for (char c : basis)
    if (c != 'X' && c != 'Y' && c != 'Z')
      throw ParameterError("basis label characters must be X, Y or Z: " +
                           basis);
}

/// The nine tomography bases in fixed (row-major) order XX..ZZ.
inline std::vector<std::string> tomography_bases() {
  std::vector<std::string> out;
  for (char a : {'X', 'Y', 'Z'})
    for (char b : {'X', 'Y', 'Z'}) out.push_back(std::string{a, b});
  return out;
}

/// CSV serialization: header "basis,bitstring,count", one row per observed
/// string, tables in input order.  Counts may be fractional (mitigated).
inline void write_shot_tables(const std::vector<ShotTable>& tables,
                              const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("write_shot_tables: cannot open " + path);
  out << "basis,bitstring,count\n";
  for (const auto& table : tables)
    for (const auto& [s, c] : table.counts)
      out << table.basis << ',' << format_bits(s, table.n_sites) << ','
          << format_double(c) << '\n';
  if (!out) throw ConfigError("write_shot_tables: write failed for " + path);
}

inline std::vector<ShotTable> read_shot_tables(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("read_shot_tables: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "basis,bitstring,count")
    throw ConfigError("read_shot_tables: bad header in " + path);
  std::vector<ShotTable> tables;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string basis, bits, count;
    if (!std::getline(row, basis, ',') || !std::getline(row, bits, ',') ||
        !std::getline(row, count))
      throw ConfigError("read_shot_tables: malformed row: " + line);
    const auto [it, inserted] = index.try_emplace(basis, tables.size());
    if (inserted) {
      ShotTable table;
      table.basis = basis;
      table.n_sites = static_cast<int>(bits.size());
      tables.push_back(std::move(table));
    }
    ShotTable& table = tables[it->second];
    if (static_cast<int>(bits.size()) != table.n_sites)
      throw ConfigError("read_shot_tables: inconsistent bitstring width");
    const double c = std::stod(count);
    table.counts[parse_bits(bits)] += c;
    table.shots += c;
  }
  return tables;
}

// ---------------------------------------------------------------------------
// Sampling.
// ---------------------------------------------------------------------------

namespace detail {

/// In-place single-qubit gate on a full-space vector.
inline void apply_single_qubit(Eigen::VectorXcd& amps, int qubit,
                               const Eigen::Matrix2cd& u) {
  const std::size_t dim = static_cast<std::size_t>(amps.size());
  const std::uint32_t mask = std::uint32_t{1} << qubit;
  for (std::uint32_t s = 0; s < dim; ++s) {
    if (s & mask) continue;
    const std::uint32_t s1 = s | mask;
    const cd a0 = amps[s], a1 = amps[s1];
    amps[s] = u(0, 0) * a0 + u(0, 1) * a1;
    amps[s1] = u(1, 0) * a0 + u(1, 1) * a1;
  }
}

/// Rotation mapping the measured Pauli onto Z (identity for Z).
inline Eigen::Matrix2cd measurement_rotation(char pauli) {
  const double s = 1.0 / std::numbers::sqrt2;
  Eigen::Matrix2cd u;
  switch (pauli) {
    case 'X':  // R_y(-pi/2)
      u << cd{s, 0}, cd{s, 0}, cd{-s, 0}, cd{s, 0};
      return u;
    case 'Y':  // R_x(+pi/2)
      u << cd{s, 0}, cd{0, -s}, cd{0, -s}, cd{s, 0};
      return u;
    case 'Z':
      return Eigen::Matrix2cd::Identity();
    default:
      throw ParameterError("measurement_rotation: unknown Pauli");
  }
}

}  // namespace detail

/**
 * Draws `shots` computational-basis samples of |psi> with subsystem A
 * rotated into the requested Pauli basis, then pushes every shot through
 * the confusion model (independent per-qubit flips).  Deterministic in the
 * seed; an ideal confusion matrix consumes no flip draws.
 */
inline ShotTable sample_shots(const StateVector& psi,
                              const std::vector<int>& subsystem_a,
                              const std::string& basis, std::int64_t shots,
                              const ConfusionMatrix& confusion,
                              std::uint64_t seed) {
  check_basis_label(basis);
  if (subsystem_a.size() != 2)
    throw ParameterError("sample_shots: subsystem A must have two sites");
  check_subsystem(subsystem_a, psi.basis.n_sites);
  if (shots < 1) throw ParameterError("sample_shots: shots must be >= 1");
  if (confusion.qubits() != psi.basis.n_sites)
    throw ParameterError("sample_shots: confusion matrix covers " +
                         std::to_string(confusion.qubits()) + " qubits, not " +
                         std::to_string(psi.basis.n_sites));

  const StateVector full = expand_to_full(psi);
  Eigen::VectorXcd rotated = full.amplitudes;
  for (std::size_t i = 0; i < subsystem_a.size(); ++i)
    detail::apply_single_qubit(rotated, subsystem_a[i],
                               detail::measurement_rotation(basis[i]));

  const std::size_t dim = static_cast<std::size_t>(rotated.size());
  std::vector<double> cumulative(dim);
  double acc = 0.0;
  for (std::size_t s = 0; s < dim; ++s) {
    acc += std::norm(rotated[static_cast<Eigen::Index>(s)]);
    cumulative[s] = acc;
  }
  if (acc <= 0.0) throw ParameterError("sample_shots: zero-norm state");

  ShotTable table;
  table.n_sites = psi.basis.n_sites;
  table.basis = basis;
  table.shots = static_cast<double>(shots);
  Rng rng(seed);
  const bool ideal = confusion.is_ideal();
  const int n = psi.basis.n_sites;
  for (std::int64_t i = 0; i < shots; ++i) {
    const double u = rng.uniform() * acc;
    const auto it =
        std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::uint32_t outcome = static_cast<std::uint32_t>(
        std::min<std::size_t>(
            static_cast<std::size_t>(it - cumulative.begin()), dim - 1));
    if (!ideal) {
      for (int q = 0; q < n; ++q) {
        const double keep =
            bit_at(outcome, q) ? confusion.f11(q) : confusion.f00(q);
        if (rng.uniform() >= keep) outcome ^= std::uint32_t{1} << q;
      }
    }
    table.counts[outcome] += 1.0;
  }
  return table;
}

// ---------------------------------------------------------------------------
// Mitigation.
// ---------------------------------------------------------------------------

enum class MitigationMode { kInverse, kAsWritten, kNone };

inline MitigationMode parse_mitigation_mode(const std::string& text) {
  if (text == "inverse") return MitigationMode::kInverse;
  if (text == "as-written") return MitigationMode::kAsWritten;
  if (text == "none") return MitigationMode::kNone;
  throw ConfigError("mitigation mode must be inverse, as-written or none");
}

/**
 * Applies the product confusion map (as-written) or its inverse to the
 * observed counts.  Inverse mitigation clips negative counts to zero and
 * rescales back to the observed total; a per-qubit factor with
 * F00 + F11 = 1 is singular and rejected.
 */
inline ShotTable mitigate_counts(const ShotTable& table,
                                 const ConfusionMatrix& confusion,
                                 MitigationMode mode) {
  if (mode == MitigationMode::kNone) return table;
  if (confusion.qubits() != table.n_sites)
    throw ParameterError("mitigate_counts: confusion matrix size mismatch");
  if (table.n_sites > 20)
    throw ParameterError("mitigate_counts: more than 20 sites");

  const std::size_t dim = std::size_t{1} << table.n_sites;
  std::vector<double> dense(dim, 0.0);
  for (const auto& [s, c] : table.counts) dense[s] = c;
  const double observed_total = table.total();

  for (int q = 0; q < table.n_sites; ++q) {
    // Per-qubit factor [[F00, 1-F11], [1-F00, F11]] (column = true value).
    double m00 = confusion.f00(q), m01 = 1.0 - confusion.f11(q);
    double m10 = 1.0 - confusion.f00(q), m11 = confusion.f11(q);
    if (mode == MitigationMode::kInverse) {
      const double det = confusion.f00(q) + confusion.f11(q) - 1.0;
      if (std::abs(det) < 1e-12)
        throw MitigationError(
            "mitigate_counts: singular confusion factor on qubit " +
            std::to_string(q));
      const double i00 = m11 / det, i01 = -m01 / det;
      const double i10 = -m10 / det, i11 = m00 / det;
      m00 = i00;
      m01 = i01;
      m10 = i10;
      m11 = i11;
    }
    const std::uint32_t mask = std::uint32_t{1} << q;
    for (std::uint32_t s = 0; s < dim; ++s) {
      if (s & mask) continue;
      const double c0 = dense[s], c1 = dense[s | mask];
      dense[s] = m00 * c0 + m01 * c1;
      dense[s | mask] = m10 * c0 + m11 * c1;
    }
  }

  if (mode == MitigationMode::kInverse) {
    double positive = 0.0;
    for (double& c : dense) {
      if (c < 0.0) c = 0.0;
      positive += c;
    }
    if (positive <= 0.0)
      throw MitigationError("mitigate_counts: all counts clipped away");
    const double scale = observed_total / positive;
    for (double& c : dense) c *= scale;
  }

  ShotTable out;
  out.n_sites = table.n_sites;
  out.basis = table.basis;
  out.shots = table.shots;
  for (std::uint32_t s = 0; s < dim; ++s)
    if (dense[s] > 1e-12) out.counts[s] = dense[s];
  return out;
}

// ---------------------------------------------------------------------------
// Selection, conditioning, reconstruction.
// ---------------------------------------------------------------------------

/// Bath outcomes whose marginal count reaches `threshold` in every table,
/// ascending.  `subsystem_b` lists the bath sites (local bit l = B[l]).
inline std::vector<std::uint32_t> select_bitstrings(
    const std::vector<ShotTable>& tables, const std::vector<int>& subsystem_b,
    double threshold = 80.0) {
  if (tables.empty())
    throw ParameterError("select_bitstrings: no shot tables");
  std::map<std::uint32_t, double> floor_count;
  bool first = true;
  for (const auto& table : tables) {
    check_subsystem(subsystem_b, table.n_sites);
    std::map<std::uint32_t, double> marginal;
    for (const auto& [s, c] : table.counts)
      marginal[extract_local(s, subsystem_b)] += c;
    if (first) {
      floor_count = std::move(marginal);
      first = false;
      continue;
    }
    for (auto it = floor_count.begin(); it != floor_count.end();) {
      const auto found = marginal.find(it->first);
      if (found == marginal.end()) {
        it = floor_count.erase(it);
      } else {
        it->second = std::min(it->second, found->second);
        ++it;
      }
    }
  }
  std::vector<std::uint32_t> out;
  for (const auto& [zb, c] : floor_count)
    if (c >= threshold - 1e-9) out.push_back(zb);
  return out;
}

/// Counts over A outcomes among shots whose bath bits equal z_b.
inline std::array<double, 4> conditional_counts(
    const ShotTable& table, const std::vector<int>& subsystem_a,
    std::uint32_t z_b) {
  check_subsystem(subsystem_a, table.n_sites);
  if (subsystem_a.size() != 2)
    throw ParameterError("conditional_counts: subsystem A must have 2 sites");
  const std::vector<int> bath = complement_sites(subsystem_a, table.n_sites);
  std::array<double, 4> out{0.0, 0.0, 0.0, 0.0};
  for (const auto& [s, c] : table.counts) {
    if (extract_local(s, bath) != z_b) continue;
    out[extract_local(s, subsystem_a)] += c;
  }
  return out;
}

/// Hermitian part, negative eigenvalues clipped, trace renormalized.
inline Eigen::MatrixXcd project_psd(const Eigen::MatrixXcd& m) {
  const Eigen::MatrixXcd herm = 0.5 * (m + m.adjoint());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(herm);
  if (eig.info() != Eigen::Success)
    throw NumericalError("project_psd: eigensolve failed");
  Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
  const double total = lambda.sum();
  if (total <= 0.0)
    throw ReconstructionError("project_psd: no positive spectral weight");
  lambda /= total;
  return eig.eigenvectors() * lambda.asDiagonal() *
         eig.eigenvectors().adjoint();
}

struct TomogramA {
  std::uint32_t z_b = 0;
  Eigen::MatrixXcd rho;  // 4x4, PSD, unit trace
  std::map<std::string, double> counts_per_basis;
};

/**
 * Linear-inversion two-qubit tomography of rho_A(z_B) from the nine Pauli
 * bases, followed by the PSD projection.  Every basis must contribute at
 * least `min_counts` conditioned shots (reconstruction error otherwise);
 * duplicated or missing bases are rejected.
 */
inline TomogramA tomo_reconstruct(const std::vector<ShotTable>& tables,
                                  const std::vector<int>& subsystem_a,
                                  std::uint32_t z_b, double min_counts = 1.0) {
  std::map<std::string, const ShotTable*> by_basis;
  for (const auto& table : tables) {
    check_basis_label(table.basis);
    if (!by_basis.emplace(table.basis, &table).second)
      throw ReconstructionError("tomo_reconstruct: duplicate basis " +
                                table.basis);
  }
  TomogramA tomo;
  tomo.z_b = z_b;

  // q[basis][z_A]: conditional outcome distribution per basis.
  std::map<std::string, std::array<double, 4>> q;
  for (const std::string& basis : tomography_bases()) {
    const auto it = by_basis.find(basis);
    if (it == by_basis.end())
      throw ReconstructionError("tomo_reconstruct: missing basis " + basis);
    std::array<double, 4> counts =
        conditional_counts(*it->second, subsystem_a, z_b);
    const double total = counts[0] + counts[1] + counts[2] + counts[3];
    tomo.counts_per_basis[basis] = total;
    if (total < min_counts)
      throw ReconstructionError(
          "tomo_reconstruct: insufficient counts in basis " + basis + " (" +
          format_double(total) + " < " + format_double(min_counts) + ")");
    for (double& c : counts) c /= total;
    q[basis] = counts;
  }

  // Pauli expectation estimates.  Outcome bit b -> eigenvalue (1 - 2b);
  // local bit 0 belongs to A[0] (basis character 0).
  const auto correlator = [&](const std::string& basis) {
    double acc = 0.0;
    for (int za = 0; za < 4; ++za)
      acc += (1 - 2 * (za & 1)) * (1 - 2 * ((za >> 1) & 1)) *
             q[basis][static_cast<std::size_t>(za)];
    return acc;
  };
  const auto single = [&](const std::string& basis, int position) {
    double acc = 0.0;
    for (int za = 0; za < 4; ++za)
      acc += (1 - 2 * ((za >> position) & 1)) *
             q[basis][static_cast<std::size_t>(za)];
    return acc;
  };

  const std::array<char, 3> paulis{'X', 'Y', 'Z'};
  std::map<char, Eigen::Matrix2cd> sigma;
  sigma['X'] = (Eigen::Matrix2cd() << cd{0, 0}, cd{1, 0}, cd{1, 0}, cd{0, 0})
                   .finished();
  sigma['Y'] = (Eigen::Matrix2cd() << cd{0, 0}, cd{0, -1}, cd{0, 1}, cd{0, 0})
                   .finished();
  sigma['Z'] = (Eigen::Matrix2cd() << cd{1, 0}, cd{0, 0}, cd{0, 0}, cd{-1, 0})
                   .finished();
  const Eigen::Matrix2cd id2 = Eigen::Matrix2cd::Identity();

  // Two-site operator with P on local bit 0, Q on local bit 1:
  // element (i, j) = P[b0(i), b0(j)] * Q[b1(i), b1(j)].
  const auto two_site = [&](const Eigen::Matrix2cd& p,
                            const Eigen::Matrix2cd& o) {
    Eigen::Matrix4cd m;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        m(i, j) = p(i & 1, j & 1) * o((i >> 1) & 1, (j >> 1) & 1);
    return m;
  };

  Eigen::Matrix4cd rho = two_site(id2, id2);
  for (char p : paulis) {
    double first = 0.0, second = 0.0;
    for (char o : paulis) {
      first += single(std::string{p, o}, 0);
      second += single(std::string{o, p}, 1);
    }
    rho += (first / 3.0) * two_site(sigma[p], id2);
    rho += (second / 3.0) * two_site(id2, sigma[p]);
    for (char o : paulis)
      rho += correlator(std::string{p, o}) * two_site(sigma[p], sigma[o]);
  }
  rho /= 4.0;

  tomo.rho = project_psd(rho);
  return tomo;
}

///// Measured bath-outcome probability, pooled over all tables:
/// p(z_B) = sum_v m(z_B | v) / sum_v M(v).
inline double probability_of(std::uint32_t z_b,
                             const std::vector<ShotTable>& tables,
                             const std::vector<int>& subsystem_b) {
  if (tables.empty()) throw ParameterError("probability_of: no shot tables");
  double hits = 0.0, total = 0.0;
  for (const auto& table : tables) {
    check_subsystem(subsystem_b, table.n_sites);
    for (const auto& [s, c] : table.counts) {
      total += c;
      if (extract_local(s, subsystem_b) == z_b) hits += c;
    }
  }
  if (total <= 0.0) throw ParameterError("probability_of: empty tables");
  return hits / total;
}

}  // namespace deeptherm
