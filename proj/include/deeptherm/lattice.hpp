// Copyright 2026 The deeptherm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "deeptherm/common.hpp"

/**
 * Rectangular spin-1/2 lattice with nearest-neighbour XY (flip-flop)
 * couplings, U(1)-sector bookkeeping, and a CSR Hamiltonian.
 *
 * Site indexing is row-major: site = r*cols + c, so a rows x cols grid has
 * horizontal bonds (s, s+1) and vertical bonds (s, s+cols).  Qubit Q_i is
 * bit i of a basis bitmask (see common.hpp).
 *
 * H = sum_<i,j> J_ij (s_i^+ s_j^- + s_i^- s_j^+) hops single excitations
 * between neighbouring sites and conserves total excitation number, so it
 * is block-diagonal over fixed-weight sectors.
 */
namespace deeptherm {

/// Default coupling strength: 2*pi * 4 MHz, in rad/s.
inline constexpr double kDefaultCouplingRadPerSec = kRadPerSecPerMHz * 4.0;

// ---------------------------------------------------------------------------
// LatticeSpec
// ---------------------------------------------------------------------------

class LatticeSpec {
 public:
  LatticeSpec(int rows, int cols,
              double j_default_rad = kDefaultCouplingRadPerSec)
      : rows_(rows), cols_(cols), j_default_(j_default_rad) {
    if (rows_ < 1 || cols_ < 1)
      throw ConfigError("LatticeSpec: rows and cols must be >= 1");
    if (rows_ * cols_ > 32)
      throw ConfigError("LatticeSpec: at most 32 sites supported");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int sites() const { return rows_ * cols_; }

  /// True iff (i, j) is a horizontal or vertical nearest-neighbour pair.
  bool is_neighbor(int i, int j) const {
    check_site(i);
    check_site(j);
    if (i == j) return false;
    const int ri = i / cols_, ci = i % cols_;
    const int rj = j / cols_, cj = j % cols_;
    return (ri == rj && std::abs(ci - cj) == 1) ||
           (ci == cj && std::abs(ri - rj) == 1);
  }

  /// Coupling J_ij in rad/s (default unless overridden).
  double coupling(int i, int j) const {
    if (!is_neighbor(i, j))
      throw ConfigError("LatticeSpec: sites " + std::to_string(i) + "," +
                        std::to_string(j) + " are not nearest neighbours");
    const auto it = overrides_.find(bond_key(i, j));
    return it == overrides_.end() ? j_default_ : it->second;
  }

  /// Overrides one bond's coupling (rad/s).  Non-neighbour pairs are a
  /// spec error, as is an override for a bond outside the grid.
  void set_coupling(int i, int j, double j_rad) {
    if (!is_neighbor(i, j))
      throw ConfigError("LatticeSpec: coupling override for non-neighbour pair " +
                        std::to_string(i) + "," + std::to_string(j));
    overrides_[bond_key(i, j)] = j_rad;
  }

  /// All bonds (i < j), row-major order, with their couplings.
  std::vector<std::tuple<int, int, double>> bonds() const {
    std::vector<std::tuple<int, int, double>> out;
    for (int s = 0; s < sites(); ++s) {
      const int r = s / cols_, c = s % cols_;
      if (c + 1 < cols_) out.emplace_back(s, s + 1, coupling(s, s + 1));
      if (r + 1 < rows_) out.emplace_back(s, s + cols_, coupling(s, s + cols_));
    }
    return out;
  }

  /// Parses {"rows": R, "cols": C, "j_default_mhz": f,
  ///         "j_overrides": [{"i": a, "j": b, "mhz": f}, ...]}.
  /// Frequencies are ordinary MHz; stored internally as rad/s.
  static LatticeSpec from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("rows") || !doc.contains("cols"))
      throw ConfigError("lattice JSON must carry integer rows and cols");
    if (!doc["rows"].is_number_integer() || !doc["cols"].is_number_integer())
      throw ConfigError("lattice JSON rows/cols must be integers");
    const double j_mhz = doc.value("j_default_mhz", 4.0);
    LatticeSpec spec(doc["rows"].get<int>(), doc["cols"].get<int>(),
                     j_mhz * kRadPerSecPerMHz);
    if (doc.contains("j_overrides")) {
      if (!doc["j_overrides"].is_array())
        throw ConfigError("lattice JSON j_overrides must be an array");
      for (const auto& entry : doc["j_overrides"]) {
        if (!entry.contains("i") || !entry.contains("j") ||
            !entry.contains("mhz"))
          throw ConfigError("lattice override needs fields i, j, mhz");
        spec.set_coupling(entry["i"].get<int>(), entry["j"].get<int>(),
                          entry["mhz"].get<double>() * kRadPerSecPerMHz);
      }
    }
    return spec;
  }

  nlohmann::json to_json() const {
    nlohmann::json doc;
    doc["rows"] = rows_;
    doc["cols"] = cols_;
    doc["j_default_mhz"] = j_default_ / kRadPerSecPerMHz;
    nlohmann::json overrides = nlohmann::json::array();
    for (const auto& [key, value] : overrides_) {
      overrides.push_back({{"i", key.first},
                           {"j", key.second},
                           {"mhz", value / kRadPerSecPerMHz}});
    }
    if (!overrides.empty()) doc["j_overrides"] = overrides;
    return doc;
  }

 private:
  void check_site(int s) const {
    if (s < 0 || s >= sites())
      throw ParameterError("LatticeSpec: site index " + std::to_string(s) +
                           " outside grid of " + std::to_string(sites()));
  }
  static std::pair<int, int> bond_key(int i, int j) {
    return {std::min(i, j), std::max(i, j)};
  }

  int rows_;
  int cols_;
  double j_default_;
  std::map<std::pair<int, int>, double> overrides_;
};

// ---------------------------------------------------------------------------
// Basis bookkeeping.
// ---------------------------------------------------------------------------

/// Identifies the vector space a state/operator lives in: either the full
/// 2^N space or one fixed-excitation sector.  kFullSpace marks the former.
struct BasisTag {
  int n_sites = 0;
  int excitations = kFullSpace;

  static constexpr int kFullSpace = -1;

  static BasisTag full(int n_sites) { return BasisTag{n_sites, kFullSpace}; }
  static BasisTag sector(int n_sites, int excitations) {
    return BasisTag{n_sites, excitations};
  }

  bool is_sector() const { return excitations != kFullSpace; }

  std::size_t dimension() const;

  bool operator==(const BasisTag& other) const = default;

  std::string str() const {
    return is_sector() ? "sector:" + std::to_string(n_sites) + ":" +
                             std::to_string(excitations)
                       : "full:" + std::to_string(n_sites);
  }

  static BasisTag parse(const std::string& text) {
    const auto fail = [&] {
      throw ConfigError("BasisTag: cannot parse \"" + text + "\"");
    };
    if (text.rfind("full:", 0) == 0) {
      const int n = std::stoi(text.substr(5));
      if (n < 1 || n > 32) fail();
      return full(n);
    }
    if (text.rfind("sector:", 0) == 0) {
      const auto colon = text.find(':', 7);
      if (colon == std::string::npos) fail();
      const int n = std::stoi(text.substr(7, colon - 7));
      const int k = std::stoi(text.substr(colon + 1));
      if (n < 1 || n > 32 || k < 0 || k > n) fail();
      return sector(n, k);
    }
    fail();
    return {};  // unreachable
  }
};

inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (int i = 1; i <= k; ++i)
    result = result * static_cast<std::uint64_t>(n - k + i) /
             static_cast<std::uint64_t>(i);
  return result;
}

inline std::size_t BasisTag::dimension() const {
  if (n_sites < 1 || n_sites > 32)
    throw ParameterError("BasisTag: site count out of range");
  if (!is_sector()) return std::size_t{1} << n_sites;
  if (excitations < 0 || excitations > n_sites)
    throw ParameterError("BasisTag: excitation count out of range");
  return static_cast<std::size_t>(binomial(n_sites, excitations));
}

/// Ordered basis of one fixed-weight sector: all N-bit states with exactly
/// k set bits, ascending as integers, plus the inverse (state -> rank) map.
class SectorBasis {
 public:
  SectorBasis(int n_sites, int excitations)
      : tag_(BasisTag::sector(n_sites, excitations)) {
    if (n_sites < 1 || n_sites > 32)
      throw ParameterError("SectorBasis: site count out of range");
    if (excitations < 0 || excitations > n_sites)
      throw ParameterError("SectorBasis: excitation count must be in [0, N]");
    states_.reserve(tag_.dimension());
    // Gosper's hack walks fixed-weight states in ascending order.
    if (excitations == 0) {
      states_.push_back(0);
    } else {
      std::uint32_t s = (std::uint32_t{1} << excitations) - 1;
      const std::uint64_t top = std::uint64_t{1} << n_sites;
      while (s < top) {
        states_.push_back(s);
        const std::uint32_t c = s & (0u - s);
        const std::uint32_t r = s + c;
        s = (((r ^ s) >> 2) / c) | r;
        if (c == 0) break;  // weight-0 guard; unreachable for k >= 1
      }
    }
    rank_.reserve(states_.size() * 2);
    for (std::size_t i = 0; i < states_.size(); ++i)
      rank_.emplace(states_[i], static_cast<int>(i));
  }

  const BasisTag& tag() const { return tag_; }
  int n_sites() const { return tag_.n_sites; }
  int excitations() const { return tag_.excitations; }
  std::size_t dimension() const { return states_.size(); }

  std::uint32_t state(std::size_t rank) const { return states_[rank]; }
  const std::vector<std::uint32_t>& states() const { return states_; }

  /// Rank of a basis state, or -1 if it lies outside the sector.
  int rank(std::uint32_t s) const {
    const auto it = rank_.find(s);
    return it == rank_.end() ? -1 : it->second;
  }

 private:
  BasisTag tag_;
  std::vector<std::uint32_t> states_;
  std::unordered_map<std::uint32_t, int> rank_;
};

inline SectorBasis enumerate_sector(int n_sites, int excitations) {
  return SectorBasis(n_sites, excitations);
}

// ---------------------------------------------------------------------------
// Sparse Hamiltonian (CSR, real symmetric; states are complex).
// ---------------------------------------------------------------------------

class SparseHamiltonian {
 public:
  SparseHamiltonian(BasisTag basis, std::size_t dim,
                    std::vector<std::vector<std::pair<int, double>>> rows)
      : basis_(basis), dim_(dim) {
    row_ptr_.reserve(dim_ + 1);
    row_ptr_.push_back(0);
    for (auto& row : rows) {
      std::sort(row.begin(), row.end());
      for (const auto& [col, val] : row) {
        cols_.push_back(col);
        vals_.push_back(val);
      }
      row_ptr_.push_back(static_cast<std::int64_t>(cols_.size()));
    }
  }

  const BasisTag& basis() const { return basis_; }
  std::size_t dimension() const { return dim_; }
  std::size_t nonzeros() const { return vals_.size(); }

  /// y = H x.  Buffers must not alias and must have length dimension().
  void apply(const cd* x, cd* y) const {
    for (std::size_t r = 0; r < dim_; ++r) {
      cd acc{0.0, 0.0};
      const std::int64_t begin = row_ptr_[r], end = row_ptr_[r + 1];
      for (std::int64_t n = begin; n < end; ++n)
        acc += vals_[static_cast<std::size_t>(n)] *
               x[static_cast<std::size_t>(cols_[static_cast<std::size_t>(n)])];
      y[r] = acc;
    }
  }

  Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const {
    if (static_cast<std::size_t>(x.size()) != dim_)
      throw ParameterError("SparseHamiltonian::apply: dimension mismatch");
    Eigen::VectorXcd y(x.size());
    apply(x.data(), y.data());
    return y;
  }

  /// Gershgorin bound on the spectral radius: max_r sum_c |H_rc|.
  /// The diagonal is zero, so the spectrum lies in [-bound, bound].
  double norm_bound() const {
    double best = 0.0;
    for (std::size_t r = 0; r < dim_; ++r) {
      double row_sum = 0.0;
      for (std::int64_t n = row_ptr_[r]; n < row_ptr_[r + 1]; ++n)
        row_sum += std::abs(vals_[static_cast<std::size_t>(n)]);
      best = std::max(best, row_sum);
    }
    return best;
  }

  /// Dense copy for small-system oracles.  Guarded: dense work above this
  /// size is a mistake, not a use case.
  Eigen::MatrixXd dense() const {
    if (dim_ > 8192)
      throw ParameterError("SparseHamiltonian::dense: dimension > 8192");
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim_),
                                              static_cast<Eigen::Index>(dim_));
    for (std::size_t r = 0; r < dim_; ++r)
      for (std::int64_t n = row_ptr_[r]; n < row_ptr_[r + 1]; ++n)
        h(static_cast<Eigen::Index>(r), cols_[static_cast<std::size_t>(n)]) =
            vals_[static_cast<std::size_t>(n)];
    return h;
  }

 private:
  BasisTag basis_;
  std::size_t dim_;
  std::vector<std::int64_t> row_ptr_;
  std::vector<int> cols_;
  std::vector<double> vals_;
};

/**
 * Builds H = sum_<i,j> J_ij (s+ s- + s- s+) in the requested basis.
 *
 * In bit language each bond (i, j) connects s and s ^ (1<<i | 1<<j)
 * whenever bits i and j differ, with matrix element J_ij.  Hermiticity is
 * automatic (both states enumerate the swap), and the excitation number is
 * conserved, so sector bases close under H.
 */
inline SparseHamiltonian build_hamiltonian(const LatticeSpec& spec,
                                           const BasisTag& basis) {
  if (basis.n_sites != spec.sites())
    throw ParameterError("build_hamiltonian: basis site count " +
                         std::to_string(basis.n_sites) +
                         " does not match lattice sites " +
                         std::to_string(spec.sites()));
  const auto bonds = spec.bonds();
  const std::size_t dim = basis.dimension();
  std::vector<std::vector<std::pair<int, double>>> rows(dim);

  const auto connect = [&](std::uint32_t s, auto&& rank_of, std::size_t r) {
    for (const auto& [i, j, coupling] : bonds) {
      if (bit_at(s, i) == bit_at(s, j)) continue;
      const std::uint32_t partner =
          s ^ ((std::uint32_t{1} << i) | (std::uint32_t{1} << j));
      rows[r].emplace_back(rank_of(partner), coupling);
    }
  };

  if (basis.is_sector()) {
    const SectorBasis sector(basis.n_sites, basis.excitations);
    for (std::size_t r = 0; r < dim; ++r)
      connect(sector.state(r), [&](std::uint32_t s) { return sector.rank(s); },
              r);
  } else {
    for (std::size_t r = 0; r < dim; ++r)
      connect(static_cast<std::uint32_t>(r),
              [](std::uint32_t s) { return static_cast<int>(s); }, r);
  }
  return SparseHamiltonian(basis, dim, std::move(rows));
}

inline SparseHamiltonian build_hamiltonian(const LatticeSpec& spec) {
  return build_hamiltonian(spec, BasisTag::full(spec.sites()));
}

}  // namespace deeptherm
