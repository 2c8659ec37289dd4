// Copyright 2026 The deeptherm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "deeptherm/common.hpp"
#include "deeptherm/lattice.hpp"

/**
 * State vectors over either the full 2^N space or a fixed-excitation
 * sector, product-state preparation, and checkpoint I/O.
 *
 * Product patterns are site-indexed strings over {0, 1, x, y}:
 * pattern[j] prepares qubit Q_j in |0>, |1>, |x+> = (|0>+|1>)/sqrt(2) or
 * |y+> = (|0>+i|1>)/sqrt(2).  Note pattern[0] is Q_0 (site order), unlike
 * rendered basis strings which are MSB-first.
 */
namespace deeptherm {

struct StateVector {
  BasisTag basis;
  Eigen::VectorXcd amplitudes;

  std::size_t dimension() const {
    return static_cast<std::size_t>(amplitudes.size());
  }

  double norm() const { return amplitudes.norm(); }

  void normalize() {
    const double n = norm();
    if (n <= 0.0)
      throw NumericalError("StateVector::normalize: zero-norm state");
    amplitudes /= n;
  }

  void check_consistent() const {
    if (dimension() != basis.dimension())
      throw ParameterError("StateVector: amplitude count " +
                           std::to_string(dimension()) +
                           " does not match basis " + basis.str());
  }
};

inline cd inner_product(const StateVector& a, const StateVector& b) {
  if (!(a.basis == b.basis))
    throw ParameterError("inner_product: mismatched bases " + a.basis.str() +
                         " vs " + b.basis.str());
  return a.amplitudes.dot(b.amplitudes);  // Eigen dot conjugates a.
}

/// |<a|b>|^2, the overlap fidelity for pure states.
inline double overlap_fidelity(const StateVector& a, const StateVector& b) {
  const cd ip = inner_product(a, b);
  return std::norm(ip);
}

// ---------------------------------------------------------------------------
// Product-state preparation.
// ---------------------------------------------------------------------------

/// Named patterns: "neel" = 0101... (Q_0 empty), "psi1" = x on even sites,
/// y on odd sites.  Anything else must be an explicit {0,1,x,y} string.
inline std::string resolve_pattern(const std::string& name, int n_sites) {
  std::string pattern;
  if (name == "neel") {
    pattern.resize(static_cast<std::size_t>(n_sites));
    for (int j = 0; j < n_sites; ++j)
      pattern[static_cast<std::size_t>(j)] = (j % 2 == 0) ? '0' : '1';
    return pattern;
  }
  if (name == "psi1") {
    pattern.resize(static_cast<std::size_t>(n_sites));
    for (int j = 0; j < n_sites; ++j)
      pattern[static_cast<std::size_t>(j)] = (j % 2 == 0) ? 'x' : 'y';
    return pattern;
  }
  return name;
}

inline StateVector prepare_product_state(const std::string& pattern_in,
                                         const BasisTag& basis) {
  const std::string pattern = resolve_pattern(pattern_in, basis.n_sites);
  if (static_cast<int>(pattern.size()) != basis.n_sites)
    throw ParameterError("prepare_product_state: pattern length " +
                         std::to_string(pattern.size()) +
                         " does not match " + std::to_string(basis.n_sites) +
                         " sites");
  for (char c : pattern)
    if (c != '0' && c != '1' && c != 'x' && c != 'y')
      throw ParameterError(
          "prepare_product_state: pattern characters must be 0/1/x/y");

  StateVector out;
  out.basis = basis;

  if (basis.is_sector()) {
    // Superposition sites spread weight over several sectors; only definite
    // occupation patterns are encodable here.
    int weight = 0;
    for (char c : pattern) {
      if (c == 'x' || c == 'y')
        throw ParameterError(
            "prepare_product_state: encoding error: x/y sites cannot be "
            "represented in a fixed-excitation sector");
      weight += (c == '1');
    }
    if (weight != basis.excitations)
      throw ParameterError(
          "prepare_product_state: encoding error: pattern weight " +
          std::to_string(weight) + " does not match sector " + basis.str());
    std::uint32_t s = 0;
    for (int j = 0; j < basis.n_sites; ++j)
      if (pattern[static_cast<std::size_t>(j)] == '1')
        s |= std::uint32_t{1} << j;
    const SectorBasis sector(basis.n_sites, basis.excitations);
    out.amplitudes = Eigen::VectorXcd::Zero(
        static_cast<Eigen::Index>(sector.dimension()));
    out.amplitudes[sector.rank(s)] = cd{1.0, 0.0};
    return out;
  }

  const std::size_t dim = basis.dimension();
  out.amplitudes.resize(static_cast<Eigen::Index>(dim));
  const cd inv_sqrt2{1.0 / std::numbers::sqrt2, 0.0};
  for (std::size_t s = 0; s < dim; ++s) {
    cd amp{1.0, 0.0};
    for (int j = 0; j < basis.n_sites; ++j) {
      const int b = bit_at(static_cast<std::uint32_t>(s), j);
      switch (pattern[static_cast<std::size_t>(j)]) {
        case '0':
          if (b == 1) amp = cd{0.0, 0.0};
          break;
        case '1':
          if (b == 0) amp = cd{0.0, 0.0};
          break;
        case 'x':
          amp *= inv_sqrt2;
          break;
        case 'y':
          amp *= (b == 0) ? inv_sqrt2 : inv_sqrt2 * cd{0.0, 1.0};
          break;
      }
      if (amp == cd{0.0, 0.0}) break;
    }
    out.amplitudes[static_cast<Eigen::Index>(s)] = amp;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sector <-> full-space embedding.
// ---------------------------------------------------------------------------

inline StateVector expand_to_full(const StateVector& state) {
  state.check_consistent();
  if (!state.basis.is_sector()) return state;
  const SectorBasis sector(state.basis.n_sites, state.basis.excitations);
  StateVector out;
  out.basis = BasisTag::full(state.basis.n_sites);
  out.amplitudes =
      Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(out.basis.dimension()));
  for (std::size_t r = 0; r < sector.dimension(); ++r)
    out.amplitudes[static_cast<Eigen::Index>(sector.state(r))] =
        state.amplitudes[static_cast<Eigen::Index>(r)];
  return out;
}

/// Restriction onto one sector.  `require_support` demands that all weight
/// already lies inside the sector (up to fp dust), e.g. after conserving
/// evolution of a sector state in the full space.
inline StateVector project_to_sector(const StateVector& state, int excitations,
                                     bool require_support = false) {
  state.check_consistent();
  if (state.basis.is_sector()) {
    if (state.basis.excitations != excitations)
      throw ParameterError("project_to_sector: state lives in " +
                           state.basis.str());
    return state;
  }
  const SectorBasis sector(state.basis.n_sites, excitations);
  StateVector out;
  out.basis = sector.tag();
  out.amplitudes =
      Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(sector.dimension()));
  double captured = 0.0;
  for (std::size_t r = 0; r < sector.dimension(); ++r) {
    const cd a = state.amplitudes[static_cast<Eigen::Index>(sector.state(r))];
    out.amplitudes[static_cast<Eigen::Index>(r)] = a;
    captured += std::norm(a);
  }
  if (require_support) {
    const double total = state.amplitudes.squaredNorm();
    if (std::abs(total - captured) > 1e-9 * std::max(1.0, total))
      throw ParameterError("project_to_sector: state has weight " +
                           format_double(total - captured) +
                           " outside sector " + std::to_string(excitations));
  }
  return out;
}

/// <N_exc> = sum_s |a_s|^2 * weight(s): conserved under the XY Hamiltonian.
inline double charge_expectation(const StateVector& state) {
  state.check_consistent();
  if (state.basis.is_sector()) {
    return static_cast<double>(state.basis.excitations) *
           state.amplitudes.squaredNorm();
  }
  double acc = 0.0;
  for (std::size_t s = 0; s < state.dimension(); ++s)
    acc += std::norm(state.amplitudes[static_cast<Eigen::Index>(s)]) *
           bit_weight(static_cast<std::uint32_t>(s));
  return acc;
}

// ---------------------------------------------------------------------------
// Checkpoints: raw little-endian complex<double> array + JSON sidecar.
// ---------------------------------------------------------------------------

namespace detail {
inline void write_le_double(std::ostream& os, double x) {
  auto bits = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i) {
    const char byte = static_cast<char>((bits >> (8 * i)) & 0xffu);
    os.put(byte);
  }
}
inline double read_le_double(std::istream& is) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    const int byte = is.get();
    if (byte == std::char_traits<char>::eof())
      throw ConfigError("state checkpoint: truncated amplitude data");
    bits |= static_cast<std::uint64_t>(byte & 0xff) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}
}  // namespace detail

/// Writes <path> (binary amplitudes, real/imag interleaved, little-endian)
/// and <path>.json ({"basis_tag", "dimension", "format"}).
inline void save_state(const StateVector& state, const std::string& path) {
  state.check_consistent();
  std::ofstream bin(path, std::ios::binary | std::ios::trunc);
  if (!bin) throw ConfigError("save_state: cannot open " + path);
  for (Eigen::Index i = 0; i < state.amplitudes.size(); ++i) {
    detail::write_le_double(bin, state.amplitudes[i].real());
    detail::write_le_double(bin, state.amplitudes[i].imag());
  }
  bin.close();
  if (!bin) throw ConfigError("save_state: write failed for " + path);

  nlohmann::json header;
  header["basis_tag"] = state.basis.str();
  header["dimension"] = state.dimension();
  header["format"] = "complex128-le";
  std::ofstream meta(path + ".json", std::ios::trunc);
  if (!meta) throw ConfigError("save_state: cannot open " + path + ".json");
  meta << header.dump(2) << "\n";
}

inline StateVector load_state(const std::string& path) {
  std::ifstream meta(path + ".json");
  if (!meta) throw ConfigError("load_state: missing sidecar " + path + ".json");
  nlohmann::json header = nlohmann::json::parse(meta, nullptr,
                                                /*allow_exceptions=*/false);
  if (header.is_discarded() || !header.contains("basis_tag") ||
      !header.contains("dimension"))
    throw ConfigError("load_state: malformed sidecar " + path + ".json");
  if (header.value("format", "complex128-le") != "complex128-le")
    throw ConfigError("load_state: unknown format in " + path + ".json");

  StateVector out;
  out.basis = BasisTag::parse(header["basis_tag"].get<std::string>());
  const auto dim = header["dimension"].get<std::size_t>();
  if (dim != out.basis.dimension())
    throw ConfigError("load_state: sidecar dimension " + std::to_string(dim) +
                      " conflicts with basis " + out.basis.str());

  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw ConfigError("load_state: cannot open " + path);
  out.amplitudes.resize(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) {
    const double re = detail::read_le_double(bin);
    const double im = detail::read_le_double(bin);
    out.amplitudes[static_cast<Eigen::Index>(i)] = cd{re, im};
  }
  bin.get();
  if (!bin.eof())
    throw ConfigError("load_state: trailing bytes in " + path);
  return out;
}

}  // namespace deeptherm
