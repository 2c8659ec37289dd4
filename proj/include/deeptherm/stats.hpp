// Copyright 2026 The deeptherm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <utility>
#include <vector>

#include "deeptherm/common.hpp"
#include "deeptherm/ensemble.hpp"
#include "deeptherm/state.hpp"

/**
 * Statistical post-processing: least-squares fits, the information-leakage
 * timescale extraction, and Porter-Thomas diagnostics for measurement
 * probability distributions.
 */
namespace deeptherm {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

inline LinearFit linear_fit(const std::vector<double>& x,
                            const std::vector<double>& y) {
  if (x.size() != y.size())
    throw FitError("linear_fit: mismatched input lengths");
  const std::size_t n = x.size();
  if (n < 2) throw FitError("linear_fit: need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) throw FitError("linear_fit: degenerate abscissa");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

// ---------------------------------------------------------------------------
// Leakage timescale.
// ---------------------------------------------------------------------------

struct LeakageFit {
  double tau = 0.0;        // many-body information-leakage time, seconds
  double slope = 0.0;      // d E / d t on the early window
  double intercept = 0.0;  // fitted E at t = 0
  double r2 = 0.0;
  int window_points = 0;
};

/**
 * Fits the early-time linear growth E(t) ~ e0 * t / tau and returns
 * tau = e0 / slope.  The window keeps points with E <= window_fraction*e0
 * (the pre-saturation regime); fewer than three such points, or a
 * non-positive slope, is a fit error.
 */
inline LeakageFit fit_leakage_time(const std::vector<double>& t,
                                   const std::vector<double>& entropy,
                                   double e0 = std::numbers::ln2,
                                   double window_fraction = 0.5) {
  if (t.size() != entropy.size())
    throw FitError("fit_leakage_time: mismatched input lengths");
  if (e0 <= 0.0 || window_fraction <= 0.0)
    throw FitError("fit_leakage_time: e0 and window fraction must be > 0");
  std::vector<double> tw, ew;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (entropy[i] <= window_fraction * e0) {
      tw.push_back(t[i]);
      ew.push_back(entropy[i]);
    }
  }
  if (tw.size() < 3)
    throw FitError("fit_leakage_time: degenerate window (" +
                   std::to_string(tw.size()) + " points below " +
                   format_double(window_fraction) + " * e0)");
  const LinearFit fit = linear_fit(tw, ew);
  if (fit.slope <= 0.0)
    throw FitError("fit_leakage_time: non-positive leakage slope");
  LeakageFit out;
  out.slope = fit.slope;
  out.intercept = fit.intercept;
  out.r2 = fit.r2;
  out.tau = e0 / fit.slope;
  out.window_points = static_cast<int>(tw.size());
  return out;
}

// ---------------------------------------------------------------------------
// Porter-Thomas diagnostics.
// ---------------------------------------------------------------------------

/// Kolmogorov-Smirnov distance between samples x >= 0 and the reference
/// CDF F (monotone on [0, inf) with F(0) = 0).
template <typename Cdf>
double ks_statistic(std::vector<double> x, const Cdf& reference) {
  if (x.empty()) throw ParameterError("ks_statistic: no samples");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double cdf = reference(x[i]);
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    ks = std::max(ks, std::max(std::abs(cdf - lo), std::abs(cdf - hi)));
  }
  return ks;
}

/// Kolmogorov-Smirnov distance between samples x >= 0 and Exp(1).
inline double ks_exponential(std::vector<double> x) {
  return ks_statistic(std::move(x),
                      [](double v) { return 1.0 - std::exp(-v); });
}

/// Kolmogorov-Smirnov distance to chi-squared with one degree of freedom
/// (the law of |g|^2 for one standard real Gaussian g): F(x) = erf(sqrt(x/2)).
/// This is the probability law of basis-state quenches under Hamiltonians
/// carrying a chiral (bipartite) symmetry, where amplitudes stay confined
/// to one real line in the complex plane.
inline double ks_chi_squared_1(std::vector<double> x) {
  return ks_statistic(std::move(x), [](double v) {
    return std::erf(std::sqrt(std::max(v, 0.0) / 2.0));
  });
}

struct PorterThomasResult {
  std::size_t dimension = 0;        // D
  double ks = 0.0;                  // distance of D*p to Exp(1)
  double ks_chi1 = 0.0;             // distance of D*p to chi^2_1
  double fitted_rate = 0.0;         // histogram decay rate in D*p units
  std::vector<double> samples;      // rescaled values x = D*p
  std::vector<double> bin_edges;    // log-spaced, in x = D*p units
  std::vector<double> bin_density;  // empirical density per bin
};

/**
 * Tests measurement probabilities against the Porter-Thomas law
 * P(p) = D exp(-D p).  In rescaled units x = D p the law is Exp(1); the
 * histogram uses log-spaced bins (the natural axis for the exponential
 * tail) and the decay rate is fitted from ln(density) against the
 * count-weighted mean position per occupied bin, so a thermalized state
 * yields fitted_rate ~ 1.
 */
inline PorterThomasResult porter_thomas_test(const std::vector<double>& probs,
                                             std::size_t dimension) {
  if (probs.empty())
    throw ParameterError("porter_thomas_test: no probabilities");
  if (dimension == 0)
    throw ParameterError("porter_thomas_test: dimension must be positive");
  PorterThomasResult result;
  result.dimension = dimension;

  result.samples.resize(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] < 0.0)
      throw ParameterError("porter_thomas_test: negative probability");
    result.samples[i] = static_cast<double>(dimension) * probs[i];
  }
  result.ks = ks_exponential(result.samples);
  result.ks_chi1 = ks_chi_squared_1(result.samples);

  const int n_bins = 40;
  const double x_lo = 1e-4, x_hi = 16.0;
  const double log_step = std::log(x_hi / x_lo) / n_bins;
  result.bin_edges.resize(n_bins + 1);
  for (int b = 0; b <= n_bins; ++b)
    result.bin_edges[static_cast<std::size_t>(b)] =
        x_lo * std::exp(log_step * b);
  std::vector<double> counts(n_bins, 0.0), mean_x(n_bins, 0.0);
  for (double v : result.samples) {
    if (v < x_lo || v >= x_hi) continue;
    int b = static_cast<int>(std::log(v / x_lo) / log_step);
    b = std::clamp(b, 0, n_bins - 1);
    counts[static_cast<std::size_t>(b)] += 1.0;
    mean_x[static_cast<std::size_t>(b)] += v;
  }
  result.bin_density.resize(n_bins);
  for (int b = 0; b < n_bins; ++b) {
    const auto i = static_cast<std::size_t>(b);
    const double width = result.bin_edges[i + 1] - result.bin_edges[i];
    result.bin_density[i] =
        counts[i] / (static_cast<double>(result.samples.size()) * width);
    if (counts[i] > 0.0) mean_x[i] /= counts[i];
  }

  // Count-weighted fit of ln(density) at the per-bin mean positions.
  double swx = 0.0, swy = 0.0, sw = 0.0;
  for (int b = 0; b < n_bins; ++b) {
    const auto i = static_cast<std::size_t>(b);
    if (counts[i] <= 0.0) continue;
    swx += counts[i] * mean_x[i];
    swy += counts[i] * std::log(result.bin_density[i]);
    sw += counts[i];
  }
  if (sw <= 0.0) {
    result.fitted_rate = 0.0;
    return result;
  }
  const double mwx = swx / sw, mwy = swy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (int b = 0; b < n_bins; ++b) {
    const auto i = static_cast<std::size_t>(b);
    if (counts[i] <= 0.0) continue;
    const double cy = std::log(result.bin_density[i]);
    sxx += counts[i] * (mean_x[i] - mwx) * (mean_x[i] - mwx);
    sxy += counts[i] * (mean_x[i] - mwx) * (cy - mwy);
  }
  result.fitted_rate = sxx > 0.0 ? -sxy / sxx : 0.0;
  return result;
}

/// Porter-Thomas test of a pure state's full measurement distribution.
/// `dimension` must equal the state's (sector) basis dimension.
inline PorterThomasResult porter_thomas_test(const StateVector& psi,
                                             std::size_t dimension) {
  psi.check_consistent();
  if (dimension != psi.basis.dimension())
    throw ParameterError(
        "porter_thomas_test: dimension " + std::to_string(dimension) +
        " does not match basis dimension " +
        std::to_string(psi.basis.dimension()));
  std::vector<double> probs(psi.basis.dimension());
  for (std::size_t i = 0; i < probs.size(); ++i)
    probs[i] = std::norm(psi.amplitudes[static_cast<Eigen::Index>(i)]);
  return porter_thomas_test(probs, dimension);
}

// ---------------------------------------------------------------------------
// Excitation densities and conditional probabilities.
// ---------------------------------------------------------------------------

/// Per-site excitation density n_j = <sigma_j^+ sigma_j^->.
inline std::vector<double> excitation_density(const StateVector& psi) {
  psi.check_consistent();
  const int n = psi.basis.n_sites;
  std::vector<double> density(static_cast<std::size_t>(n), 0.0);
  const auto add = [&](std::uint32_t s, double w) {
    for (int j = 0; j < n; ++j)
      if (bit_at(s, j)) density[static_cast<std::size_t>(j)] += w;
  };
  const std::size_t dim = psi.basis.dimension();
  if (psi.basis.is_sector()) {
    const SectorBasis sector(psi.basis.n_sites, psi.basis.excitations);
    for (std::size_t r = 0; r < dim; ++r)
      add(sector.state(r), std::norm(psi.amplitudes[static_cast<Eigen::Index>(r)]));
  } else {
    for (std::size_t r = 0; r < dim; ++r)
      add(static_cast<std::uint32_t>(r),
          std::norm(psi.amplitudes[static_cast<Eigen::Index>(r)]));
  }
  return density;
}

/// p(z_A = z_a | z_B) for every bath outcome with weight above the floor,
/// ascending in z_B.  Bath bit l corresponds to the l-th complement site.
struct ConditionalDistribution {
  std::uint32_t z_a = 0;
  std::vector<std::pair<std::uint32_t, double>> entries;  // (z_b, p(z_a|z_b))
};

/// Core form over a joint bitstring distribution (probabilities or counts).
inline ConditionalDistribution conditional_probability(
    const std::map<std::uint32_t, double>& joint, int n_sites,
    const std::vector<int>& subsystem_a, std::uint32_t z_a,
    double weight_floor = 1e-12) {
  check_subsystem(subsystem_a, n_sites);
  if (z_a >> subsystem_a.size() != 0)
    throw ParameterError("conditional_probability: z_a out of range");
  const std::vector<int> bath = complement_sites(subsystem_a, n_sites);
  std::map<std::uint32_t, std::pair<double, double>> acc;  // z_b -> (hit, all)
  for (const auto& [s, w] : joint) {
    if (w < 0.0)
      throw ParameterError("conditional_probability: negative weight");
    auto& [hit, all] = acc[extract_local(s, bath)];
    all += w;
    if (extract_local(s, subsystem_a) == z_a) hit += w;
  }
  ConditionalDistribution out;
  out.z_a = z_a;
  for (const auto& [z_b, pair] : acc)
    if (pair.second > weight_floor)
      out.entries.emplace_back(z_b, pair.first / pair.second);
  return out;
}

/// State form: joint weights are the Born probabilities |<s|psi>|^2.
inline ConditionalDistribution conditional_probability(
    const StateVector& psi, const std::vector<int>& subsystem_a,
    std::uint32_t z_a, double weight_floor = 1e-12) {
  psi.check_consistent();
  std::map<std::uint32_t, double> joint;
  const std::size_t dim = psi.basis.dimension();
  if (psi.basis.is_sector()) {
    const SectorBasis sector(psi.basis.n_sites, psi.basis.excitations);
    for (std::size_t r = 0; r < dim; ++r)
      joint[sector.state(r)] +=
          std::norm(psi.amplitudes[static_cast<Eigen::Index>(r)]);
  } else {
    for (std::size_t r = 0; r < dim; ++r)
      joint[static_cast<std::uint32_t>(r)] +=
          std::norm(psi.amplitudes[static_cast<Eigen::Index>(r)]);
  }
  return conditional_probability(joint, psi.basis.n_sites, subsystem_a, z_a,
                                 weight_floor);
}

}  // namespace deeptherm
