// Copyright 2026 The deeptherm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "deeptherm/common.hpp"
#include "deeptherm/lattice.hpp"
#include "deeptherm/state.hpp"

/**
 * Projected ensembles and their moment analysis.
 *
 * Measuring the bath B of a pure state |psi> in the computational basis
 * leaves subsystem A in a conditional state rho_A(z_B) with probability
 * p(z_B); the collection {p, rho_A} is the projected ensemble.  Deep
 * thermalization compares its k-th moments
 *     M^(k) = sum_zB p(z_B) rho_A(z_B)^(x k)  (tensor power)
 * against the Haar moment (the symmetric-subspace projector divided by
 * binom(d+k-1, k)), via trace distance and the moment entropy
 * S^(k) = -Tr[M ln M] with Haar ceiling ln(k+1) for d = 2.
 *
 * Local index convention: for subsystem sites A = (a_0, a_1, ...), local
 * bit l of z_A is the value of global qubit a_l; likewise for z_B over the
 * complement.  Rendered strings stay MSB-first.  After charge-block
 * post-selection the local basis is {|01>, |10>} in that order.
 */
namespace deeptherm {

struct EnsembleEntry {
  std::uint32_t z_b = 0;   // local B bits
  double p = 0.0;          // measurement probability
  Eigen::MatrixXcd rho;    // conditional state, unit trace
};

struct ProjectedEnsemble {
  int n_sites = 0;
  std::vector<int> subsystem;  // A sites, global indices
  int local_dim = 0;           // rho dimension
  std::string source_tag;      // "exact" | "trajectory" | "shots" | "haar"
  std::vector<EnsembleEntry> entries;

  double total_weight() const {
    double acc = 0.0;
    for (const auto& e : entries) acc += e.p;
    return acc;
  }

  void validate(double tol = 1e-9) const {
    if (local_dim < 2) throw ParameterError("ensemble: local_dim must be >= 2");
    if (total_weight() > 1.0 + tol)
      throw ParameterError("ensemble: probabilities sum above 1");
    for (const auto& e : entries) {
      if (e.p < 0.0) throw ParameterError("ensemble: negative probability");
      if (e.rho.rows() != local_dim || e.rho.cols() != local_dim)
        throw ParameterError("ensemble: conditional state has wrong shape");
      if (std::abs(e.rho.trace().real() - 1.0) > tol ||
          std::abs(e.rho.trace().imag()) > tol)
        throw ParameterError("ensemble: conditional state is not unit trace");
      if ((e.rho - e.rho.adjoint()).norm() > tol)
        throw ParameterError("ensemble: conditional state is not Hermitian");
    }
  }

  nlohmann::json to_json() const;
  static ProjectedEnsemble from_json(const nlohmann::json& doc);
};

// ---------------------------------------------------------------------------
// Site bookkeeping.
// ---------------------------------------------------------------------------

inline void check_subsystem(const std::vector<int>& sites, int n_sites) {
  if (sites.empty())
    throw ParameterError("subsystem: must contain at least one site");
  std::vector<int> sorted = sites;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ParameterError("subsystem: duplicate site indices");
  if (sorted.front() < 0 || sorted.back() >= n_sites)
    throw ParameterError("subsystem: site index outside the lattice");
}

/// Ascending complement of A in [0, n_sites).
inline std::vector<int> complement_sites(const std::vector<int>& subsystem,
                                         int n_sites) {
  std::vector<bool> in_a(static_cast<std::size_t>(n_sites), false);
  for (int s : subsystem) in_a[static_cast<std::size_t>(s)] = true;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n_sites) - subsystem.size());
  for (int s = 0; s < n_sites; ++s)
    if (!in_a[static_cast<std::size_t>(s)]) out.push_back(s);
  return out;
}

/// Packs the listed sites' bits: local bit l = global bit sites[l].
inline std::uint32_t extract_local(std::uint32_t s,
                                   const std::vector<int>& sites) {
  std::uint32_t out = 0;
  for (std::size_t l = 0; l < sites.size(); ++l)
    out |= static_cast<std::uint32_t>(
               bit_at(s, sites[l]))
           << l;
  return out;
}

// ---------------------------------------------------------------------------
// Ensemble construction.
// ---------------------------------------------------------------------------

namespace detail {

/// Conditional (unnormalized) A-vectors chi_zB[z_A] = <z_A z_B | psi>.
inline std::map<std::uint32_t, Eigen::VectorXcd> conditional_vectors(
    const StateVector& psi, const std::vector<int>& subsystem) {
  psi.check_consistent();
  check_subsystem(subsystem, psi.basis.n_sites);
  if (subsystem.size() > 4)
    throw ParameterError("conditional_vectors: subsystem larger than 4 sites");
  const std::vector<int> bath =
      complement_sites(subsystem, psi.basis.n_sites);
  const int d = 1 << subsystem.size();

  std::map<std::uint32_t, Eigen::VectorXcd> chi;
  const auto visit = [&](std::uint32_t s, const cd& a) {
    if (a == cd{0.0, 0.0}) return;
    const std::uint32_t za = extract_local(s, subsystem);
    const std::uint32_t zb = extract_local(s, bath);
    auto [it, inserted] = chi.try_emplace(zb);
    if (inserted) it->second = Eigen::VectorXcd::Zero(d);
    it->second[static_cast<Eigen::Index>(za)] += a;
  };
  if (psi.basis.is_sector()) {
    const SectorBasis basis(psi.basis.n_sites, psi.basis.excitations);
    for (std::size_t r = 0; r < basis.dimension(); ++r)
      visit(basis.state(r), psi.amplitudes[static_cast<Eigen::Index>(r)]);
  } else {
    for (std::size_t s = 0; s < psi.dimension(); ++s)
      visit(static_cast<std::uint32_t>(s),
            psi.amplitudes[static_cast<Eigen::Index>(s)]);
  }
  return chi;
}

}  // namespace detail

/// Projected ensemble of a pure state: one entry per bath outcome z_B with
/// p > p_floor, rho = |chi><chi| / p.  Entries ascend in z_B.
inline ProjectedEnsemble exact_ensemble(const StateVector& psi,
                                        const std::vector<int>& subsystem,
                                        double p_floor = 1e-6) {
  if (p_floor < 0.0)
    throw ParameterError("exact_ensemble: p_floor must be >= 0");
  ProjectedEnsemble ens;
  ens.n_sites = psi.basis.n_sites;
  ens.subsystem = subsystem;
  ens.local_dim = 1 << subsystem.size();
  ens.source_tag = "exact";
  for (auto& [zb, chi] : detail::conditional_vectors(psi, subsystem)) {
    const double p = chi.squaredNorm();
    if (p < p_floor || p == 0.0) continue;
    EnsembleEntry entry;
    entry.z_b = zb;
    entry.p = p;
    entry.rho = (chi * chi.adjoint()) / p;
    ens.entries.push_back(std::move(entry));
  }
  return ens;
}

/**
 * Streaming accumulator for dephasing-averaged projected ensembles:
 *   p(z_B)   = mean_i p_i(z_B)
 *   rho(z_B) = sum_i p_i rho_i / sum_i p_i
 * i.e. the bath-conditioned density matrix of the trajectory-averaged
 * (mixed) global state.  `add` one state per noise realization (all states
 * must share one basis); `merge` combines partial accumulations (block
 * order determines the floating-point summation order, so a fixed block
 * schedule gives bit-identical results for any worker count).
 */
class TrajectoryAccumulator {
 public:
  TrajectoryAccumulator(const BasisTag& basis, std::vector<int> subsystem)
      : basis_(basis), subsystem_(std::move(subsystem)) {
    check_subsystem(subsystem_, basis_.n_sites);
  }

  void add(const StateVector& state) {
    if (!(state.basis == basis_))
      throw ParameterError("TrajectoryAccumulator: mixed bases across states");
    const int d = 1 << subsystem_.size();
    for (auto& [zb, chi] : detail::conditional_vectors(state, subsystem_)) {
      auto [it, inserted] = raw_.try_emplace(zb);
      if (inserted) it->second = Eigen::MatrixXcd::Zero(d, d);
      it->second.noalias() += chi * chi.adjoint();
    }
    ++n_states_;
  }

  void merge(const TrajectoryAccumulator& other) {
    if (!(other.basis_ == basis_) || other.subsystem_ != subsystem_)
      throw ParameterError("TrajectoryAccumulator: incompatible merge");
    for (const auto& [zb, mat] : other.raw_) {
      auto [it, inserted] = raw_.try_emplace(zb);
      if (inserted)
        it->second = mat;
      else
        it->second += mat;
    }
    n_states_ += other.n_states_;
  }

  int n_states() const { return n_states_; }

  ProjectedEnsemble finish(double p_floor = 1e-6) const {
    if (n_states_ == 0)
      throw ParameterError("TrajectoryAccumulator: no trajectories added");
    ProjectedEnsemble ens;
    ens.n_sites = basis_.n_sites;
    ens.subsystem = subsystem_;
    ens.local_dim = 1 << subsystem_.size();
    ens.source_tag = "trajectory";
    const double inv_n = 1.0 / static_cast<double>(n_states_);
    for (const auto& [zb, accumulated] : raw_) {
      const double weight = accumulated.trace().real();
      const double p = weight * inv_n;
      if (p < p_floor || weight <= 0.0) continue;
      EnsembleEntry entry;
      entry.z_b = zb;
      entry.p = p;
      entry.rho = accumulated / weight;
      ens.entries.push_back(std::move(entry));
    }
    return ens;
  }

 private:
  BasisTag basis_;
  std::vector<int> subsystem_;
  std::map<std::uint32_t, Eigen::MatrixXcd> raw_;  // sum_i chi chi^dag
  int n_states_ = 0;
};

/// One-shot form of TrajectoryAccumulator over a batch of states.
inline ProjectedEnsemble trajectory_ensemble(
    const std::vector<StateVector>& states, const std::vector<int>& subsystem,
    double p_floor = 1e-6) {
  if (states.empty())
    throw ParameterError("trajectory_ensemble: no trajectories given");
  TrajectoryAccumulator acc(states.front().basis, subsystem);
  for (const auto& state : states) acc.add(state);
  return acc.finish(p_floor);
}

/**
 * Charge-block post-selection for |A| = 2: keeps bath outcomes with the
 * given excitation count, projects each conditional state onto
 * span{|01>, |10>} (local indices 1 and 2), renormalizes the states and
 * the probability weights.  Output local basis order is {|01>, |10>}.
 */
inline ProjectedEnsemble post_select(const ProjectedEnsemble& ens,
                                     int zb_weight, bool project_block = true) {
  if (ens.local_dim != 4)
    throw ParameterError("post_select: requires a two-site subsystem");
  ProjectedEnsemble out;
  out.n_sites = ens.n_sites;
  out.subsystem = ens.subsystem;
  out.local_dim = project_block ? 2 : 4;
  out.source_tag = ens.source_tag;
  for (const auto& entry : ens.entries) {
    if (bit_weight(entry.z_b) != zb_weight) continue;
    if (!project_block) {
      out.entries.push_back(entry);
      continue;
    }
    Eigen::Matrix2cd block;
    block << entry.rho(1, 1), entry.rho(1, 2), entry.rho(2, 1),
        entry.rho(2, 2);
    const double kept = block.trace().real();
    if (kept <= 1e-12) continue;  // no weight in the charge block
    EnsembleEntry projected;
    projected.z_b = entry.z_b;
    projected.p = entry.p * kept;
    projected.rho = block / kept;
    out.entries.push_back(std::move(projected));
  }
  const double total = out.total_weight();
  if (total <= 0.0)
    throw ParameterError(
        "post_select: no entries with bath excitation count " +
        std::to_string(zb_weight));
  for (auto& entry : out.entries) entry.p /= total;
  return out;
}

/// n Haar-random pure qudit states with uniform weights (QR-free: a
/// normalized complex Gaussian vector is Haar-distributed on the sphere).
inline ProjectedEnsemble sample_haar_ensemble(int d, int n,
                                              std::uint64_t seed) {
  if (d < 2) throw ParameterError("sample_haar_ensemble: d must be >= 2");
  if (n < 1) throw ParameterError("sample_haar_ensemble: n must be >= 1");
  ProjectedEnsemble ens;
  ens.n_sites = 0;
  ens.local_dim = d;
  ens.source_tag = "haar";
  ens.subsystem = {};
  Rng rng(seed);
  ens.entries.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXcd chi(d);
    for (int c = 0; c < d; ++c) chi[c] = cd{rng.normal(), rng.normal()};
    chi.normalize();
    EnsembleEntry entry;
    entry.z_b = static_cast<std::uint32_t>(i);
    entry.p = 1.0 / n;
    entry.rho = chi * chi.adjoint();
    ens.entries.push_back(std::move(entry));
  }
  return ens;
}

// ---------------------------------------------------------------------------
// Moments.
// ---------------------------------------------------------------------------

struct MomentMatrix {
  int order = 0;      // k
  int local_dim = 0;  // d
  Eigen::MatrixXcd mat;
};

namespace detail {

inline void check_moment_size(int d, int k) {
  if (k < 1) throw ParameterError("moment order k must be >= 1");
  if (d == 2 && k > 6)
    throw ParameterError("moment order capped at k = 6 for qubit ensembles");
  double dim = 1.0;
  for (int i = 0; i < k; ++i) dim *= d;
  if (dim > static_cast<double>(1 << 20))
    throw ParameterError("moment dimension d^k exceeds 2^20");
}

}  // namespace detail

/// M^(k) = sum p rho^(x k), divided by sum p when `renormalize` (default:
/// dropped p_floor weight must not skew the Haar comparison).
inline MomentMatrix moment_matrix(const ProjectedEnsemble& ens, int k,
                                  bool renormalize = true) {
  detail::check_moment_size(ens.local_dim, k);
  if (ens.entries.empty())
    throw ParameterError("moment_matrix: empty ensemble");
  const int d = ens.local_dim;
  Eigen::Index dim = 1;
  for (int i = 0; i < k; ++i) dim *= d;

  MomentMatrix out;
  out.order = k;
  out.local_dim = d;
  out.mat = Eigen::MatrixXcd::Zero(dim, dim);
  Eigen::MatrixXcd power;
  for (const auto& entry : ens.entries) {
    power = entry.rho;
    for (int i = 1; i < k; ++i) {
      // power <- power (x) rho, first factor on the most significant digit.
      Eigen::MatrixXcd next(power.rows() * d, power.cols() * d);
      for (Eigen::Index r = 0; r < power.rows(); ++r)
        for (Eigen::Index c = 0; c < power.cols(); ++c)
          next.block(r * d, c * d, d, d) = power(r, c) * entry.rho;
      power.swap(next);
    }
    out.mat.noalias() += entry.p * power;
  }
  if (renormalize) {
    const double total = ens.total_weight();
    if (total <= 0.0)
      throw ParameterError("moment_matrix: zero total weight");
    out.mat /= total;
  }
  return out;
}

/// Haar k-th moment: projector onto the symmetric subspace of (C^d)^(x k)
/// divided by its dimension binom(d+k-1, k).
inline MomentMatrix haar_moment(int d, int k) {
  detail::check_moment_size(d, k);
  if (k > 8) throw ParameterError("haar_moment: k! explodes past k = 8");
  Eigen::Index dim = 1;
  for (int i = 0; i < k; ++i) dim *= d;

  MomentMatrix out;
  out.order = k;
  out.local_dim = d;
  out.mat = Eigen::MatrixXcd::Zero(dim, dim);

  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> digits(static_cast<std::size_t>(k));
  double n_perms = 0.0;
  do {
    n_perms += 1.0;
    for (Eigen::Index j = 0; j < dim; ++j) {
      Eigen::Index rest = j;  // digits MSB-first: copy 0 highest
      for (int c = k - 1; c >= 0; --c) {
        digits[static_cast<std::size_t>(c)] = static_cast<int>(rest % d);
        rest /= d;
      }
      Eigen::Index i = 0;
      for (int c = 0; c < k; ++c)
        i = i * d + digits[static_cast<std::size_t>(perm[static_cast<std::size_t>(c)])];
      out.mat(i, j) += cd{1.0, 0.0};
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  out.mat /= n_perms;

  const double sym_dim = static_cast<double>(binomial(d + k - 1, k));
  out.mat /= sym_dim;
  return out;
}

/// Trace distance (1/2)||a - b||_1 between Hermitian matrices (e.g. density
/// matrices from tomography).
inline double trace_distance(const Eigen::MatrixXcd& a,
                             const Eigen::MatrixXcd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ParameterError("trace_distance: incompatible shapes");
  const Eigen::MatrixXcd diff = a - b;
  const Eigen::MatrixXcd herm = 0.5 * (diff + diff.adjoint());
  if ((diff - herm).norm() > 1e-9 * std::max(1.0, diff.norm()))
    throw ParameterError("trace_distance: inputs are not Hermitian");
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(herm);
  if (eig.info() != Eigen::Success)
    throw NumericalError("trace_distance: eigensolve failed");
  return 0.5 * eig.eigenvalues().cwiseAbs().sum();
}

/// Trace distance between moment matrices of matching order.
inline double trace_distance(const MomentMatrix& a, const MomentMatrix& b) {
  if (a.order != b.order)
    throw ParameterError("trace_distance: incompatible moments");
  return trace_distance(a.mat, b.mat);
}

/// Moment entropy S = -Tr[M ln M] (eigenvalues below fp dust are skipped;
/// significantly negative spectra are rejected).
inline double moment_entropy(const MomentMatrix& m) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(
      0.5 * (m.mat + m.mat.adjoint()));
  if (eig.info() != Eigen::Success)
    throw NumericalError("moment_entropy: eigensolve failed");
  const double floor = -1e-9 * std::max(1.0, eig.eigenvalues().maxCoeff());
  double s = 0.0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    const double lambda = eig.eigenvalues()[i];
    if (lambda < floor)
      throw NumericalError("moment_entropy: negative eigenvalue " +
                           format_double(lambda));
    if (lambda > 1e-300) s -= lambda * std::log(lambda);
  }
  return s;
}

/// Ensemble-averaged second-Renyi entropy of the conditional states:
/// E = -sum p ln Tr[rho^2], with p normalized over the kept entries.
inline double average_entropy(const ProjectedEnsemble& ens) {
  if (ens.entries.empty())
    throw ParameterError("average_entropy: empty ensemble");
  const double total = ens.total_weight();
  if (total <= 0.0)
    throw ParameterError("average_entropy: zero total weight");
  double acc = 0.0;
  for (const auto& entry : ens.entries) {
    const double purity = (entry.rho * entry.rho).trace().real();
    acc -= (entry.p / total) * std::log(std::max(purity, 1e-300));
  }
  return acc;
}

/// Bloch coordinates of a post-selected qubit state, basis {|01>, |10>}
/// with the north pole at |10> (index 1):
///   z = rho_11 - rho_00, x = 2 Re rho_10, y = -2 Im rho_10.
inline std::array<double, 3> bloch_vector(const Eigen::MatrixXcd& rho) {
  if (rho.rows() != 2 || rho.cols() != 2)
    throw ParameterError("bloch_vector: expects a 2x2 state");
  return {2.0 * rho(1, 0).real(), -2.0 * rho(1, 0).imag(),
          (rho(1, 1) - rho(0, 0)).real()};
}

// ---------------------------------------------------------------------------
// JSON round trip.
// ---------------------------------------------------------------------------

inline nlohmann::json ProjectedEnsemble::to_json() const {
  nlohmann::json doc;
  doc["n_sites"] = n_sites;
  doc["subsystem"] = subsystem;
  doc["local_dim"] = local_dim;
  doc["source_tag"] = source_tag;
  const int bath_bits =
      n_sites > 0 ? n_sites - static_cast<int>(subsystem.size()) : 32;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& entry : entries) {
    nlohmann::json e;
    e["z_b"] = n_sites > 0 ? format_bits(entry.z_b, bath_bits)
                           : std::to_string(entry.z_b);
    e["p"] = entry.p;
    nlohmann::json re = nlohmann::json::array();
    nlohmann::json im = nlohmann::json::array();
    for (Eigen::Index r = 0; r < entry.rho.rows(); ++r) {
      nlohmann::json row_re = nlohmann::json::array();
      nlohmann::json row_im = nlohmann::json::array();
      for (Eigen::Index c = 0; c < entry.rho.cols(); ++c) {
        row_re.push_back(entry.rho(r, c).real());
        row_im.push_back(entry.rho(r, c).imag());
      }
      re.push_back(std::move(row_re));
      im.push_back(std::move(row_im));
    }
    e["rho_re"] = std::move(re);
    e["rho_im"] = std::move(im);
    list.push_back(std::move(e));
  }
  doc["entries"] = std::move(list);
  return doc;
}

inline ProjectedEnsemble ProjectedEnsemble::from_json(
    const nlohmann::json& doc) {
  const auto need = [&](const char* key) {
    if (!doc.contains(key))
      throw ConfigError(std::string("ensemble JSON: missing field ") + key);
  };
  need("subsystem");
  need("local_dim");
  need("entries");
  ProjectedEnsemble ens;
  ens.n_sites = doc.value("n_sites", 0);
  ens.subsystem = doc["subsystem"].get<std::vector<int>>();
  ens.local_dim = doc["local_dim"].get<int>();
  ens.source_tag = doc.value("source_tag", "");
  for (const auto& e : doc["entries"]) {
    EnsembleEntry entry;
    const std::string zb = e.at("z_b").get<std::string>();
    entry.z_b = ens.n_sites > 0
                    ? parse_bits(zb)
                    : static_cast<std::uint32_t>(std::stoul(zb));
    entry.p = e.at("p").get<double>();
    const auto& re = e.at("rho_re");
    const auto& im = e.at("rho_im");
    const auto rows = static_cast<Eigen::Index>(re.size());
    if (rows != ens.local_dim)
      throw ConfigError("ensemble JSON: rho shape mismatch");
    entry.rho.resize(rows, rows);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < rows; ++c)
        entry.rho(r, c) =
            cd{re[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]
                   .get<double>(),
               im[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]
                   .get<double>()};
    ens.entries.push_back(std::move(entry));
  }
  ens.validate(1e-6);
  return ens;
}

}  // namespace deeptherm
