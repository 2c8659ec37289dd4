// Copyright 2026 The deeptherm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

/**
 * Shared primitives: error taxonomy, unit constants, bit conventions,
 * deterministic RNG, text formatting, and a deterministic parallel loop.
 *
 * Conventions used across the library:
 *  - Internal units are radians/second for couplings and noise amplitudes,
 *    and seconds for times.  Config files speak MHz and ns; conversion
 *    happens at the config boundary, nowhere else.
 *  - Basis states are bitmasks with bit i = qubit Q_i (LSB = Q_0).
 *    Bit value 1 means spin-up / excitation present.  Rendered strings are
 *    MSB-first, i.e. format_bits(0b0011, 4) == "0011" has Q_0, Q_1 excited.
 */
namespace deeptherm {

using cd = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// rad/s per MHz of ordinary frequency: x MHz -> 2*pi*x*1e6 rad/s.
inline constexpr double kRadPerSecPerMHz = kTwoPi * 1.0e6;
/// Seconds per nanosecond / microsecond.
inline constexpr double kSecPerNs = 1.0e-9;
inline constexpr double kSecPerUs = 1.0e-6;

// ---------------------------------------------------------------------------
// Error taxonomy.  invalid_argument family = the caller handed us something
// malformed; runtime_error family = a computation failed on valid input.
// ---------------------------------------------------------------------------

/// Malformed argument values (bad dimensions, out-of-range indices, ...).
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed specifications / config documents (lattice JSON, run config).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Iterative numerics failed to converge or produced unusable output.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Readout-error mitigation cannot proceed (singular confusion factor, ...).
struct MitigationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Noise-strength calibration failed to bracket or converge.
struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// State reconstruction has insufficient or inconsistent data.
struct ReconstructionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Degenerate fit windows / underdetermined regressions.
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Bit conventions.
// ---------------------------------------------------------------------------

/// Value (0/1) of qubit j in basis state s.
inline int bit_at(std::uint32_t s, int j) {
  return static_cast<int>((s >> j) & 1u);
}

/// Number of set bits (total excitation number / U(1) charge).
inline int bit_weight(std::uint32_t s) { return std::popcount(s); }

/// MSB-first rendering: character 0 is qubit n_sites-1, last char is Q_0.
inline std::string format_bits(std::uint32_t s, int n_sites) {
  if (n_sites < 0 || n_sites > 32)
    throw ParameterError("format_bits: site count out of range");
  std::string out(static_cast<std::size_t>(n_sites), '0');
  for (int j = 0; j < n_sites; ++j)
    if (bit_at(s, j)) out[static_cast<std::size_t>(n_sites - 1 - j)] = '1';
  return out;
}

/// Inverse of format_bits.  Accepts only '0'/'1'.
inline std::uint32_t parse_bits(const std::string& text) {
  if (text.empty() || text.size() > 32)
    throw ParameterError("parse_bits: bitstring length out of range");
  std::uint32_t s = 0;
  for (char c : text) {
    if (c != '0' && c != '1')
      throw ParameterError("parse_bits: bitstring must be over {0,1}: " + text);
    s = (s << 1) | static_cast<std::uint32_t>(c - '0');
  }
  return s;
}

// ---------------------------------------------------------------------------
// Deterministic RNG.
//
// std::mt19937_64 is bit-exact everywhere, but the standard *distributions*
// are implementation-defined.  Byte-identical artifacts across compilers and
// worker counts are a hard requirement, so the engine-to-variate mapping is
// pinned here: 53-bit uniforms and Box-Muller normals.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [0, 1]-open-below: (0, 1], safe as a log() argument.
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = kTwoPi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ParameterError("Rng::below: n must be positive");
    // Rejection sampling keeps the draw unbiased and deterministic.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Text formatting.
// ---------------------------------------------------------------------------

/// Fixed, locale-independent rendering of a double for CSV/JSON artifacts.
/// %.12g keeps artifacts byte-stable given bitwise-identical inputs.
inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

// ---------------------------------------------------------------------------
// Deterministic parallel map-reduce.
//
// Work items are assigned to fixed blocks purely by index; each block's
// partial results are combined in block order on the calling thread.  The
// result is bitwise-independent of the worker count (acceptance requirement),
// because floating-point reduction order is a function of the block layout
// only.
// ---------------------------------------------------------------------------

inline int resolve_workers(int workers) {
  if (workers > 0) return workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(i) for i in [0, n) on `workers` threads.  Bodies must only
/// write to per-index slots; use parallel_reduce_blocks for accumulations.
inline void parallel_for(std::int64_t n, int workers,
                         const std::function<void(std::int64_t)>& body) {
  workers = resolve_workers(workers);
  if (n <= 0) return;
  if (workers <= 1 || n == 1) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  const int n_threads = static_cast<int>(std::min<std::int64_t>(workers, n));
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::int64_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Deterministic block reduction.  Items [0, n) are cut into blocks of
/// `block_size`; make_block(b, first, last) -> Partial runs in parallel
/// (each block sequentially), then combine(acc, partial) folds the blocks
/// in ascending block index on this thread.
template <typename Partial, typename MakeBlock, typename Combine>
Partial parallel_reduce_blocks(std::int64_t n, std::int64_t block_size,
                               int workers, Partial init,
                               const MakeBlock& make_block,
                               const Combine& combine) {
  if (block_size <= 0)
    throw ParameterError("parallel_reduce_blocks: block size must be positive");
  const std::int64_t n_blocks = n <= 0 ? 0 : (n + block_size - 1) / block_size;
  std::vector<Partial> partials;
  partials.resize(static_cast<std::size_t>(n_blocks), init);
  parallel_for(n_blocks, workers, [&](std::int64_t b) {
    const std::int64_t first = b * block_size;
    const std::int64_t last = std::min<std::int64_t>(first + block_size, n);
    partials[static_cast<std::size_t>(b)] = make_block(b, first, last);
  });
  Partial acc = std::move(init);
  for (auto& p : partials) acc = combine(std::move(acc), std::move(p));
  return acc;
}

}  // namespace deeptherm
