#pragma once

// Network models: construction, the dot-free spectral decomposition, and the
// full (dot + network) Hamiltonian with a test flux on the tagged bond.
//
// Site indexing: network sites are 0..N-1 in a NetworkModel. In the full
// Hamiltonian the dot is index 0 and network site i sits at index i+1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/Householder>

#include "sweepnet/types.hpp"

namespace sweepnet {

struct NetworkModel {
  Vec onsite_energies;  // length N
  Mat couplings;        // N x N, symmetric, zero diagonal
  Vec dot_couplings;    // length N, dot <-> site i
  Index tagged_site = 0;

  Index size() const { return onsite_energies.size(); }
  double tagged_coupling() const { return dot_couplings(tagged_site); }

  void validate() const {
    const Index n = onsite_energies.size();
    if (n < 1) throw InvalidModel("network needs at least one site");
    if (couplings.rows() != n || couplings.cols() != n)
      throw InvalidModel("coupling matrix must be N x N");
    if (dot_couplings.size() != n)
      throw InvalidModel("dot coupling vector must have length N");
    if (!onsite_energies.allFinite() || !couplings.allFinite() || !dot_couplings.allFinite())
      throw InvalidModel("model contains non-finite entries");
    for (Index i = 0; i < n; ++i) {
      if (couplings(i, i) != 0.0) throw InvalidModel("coupling matrix must have a zero diagonal");
      for (Index j = i + 1; j < n; ++j)
        if (couplings(i, j) != couplings(j, i))
          throw InvalidModel("coupling matrix must be exactly symmetric");
    }
    if (tagged_site < 0 || tagged_site >= n) throw InvalidModel("tagged site out of range");
    if (dot_couplings(tagged_site) == 0.0)
      throw InvalidModel("tagged site must have a nonzero dot coupling");
  }
};

inline NetworkModel make_network(Vec onsite, Mat couplings, Vec dot_couplings, Index tagged_site) {
  NetworkModel m{std::move(onsite), std::move(couplings), std::move(dot_couplings), tagged_site};
  m.validate();
  return m;
}

// Star geometry: every site couples only to the dot. The tagged bond defaults
// to the first nonzero coupling.
inline NetworkModel build_star(const Vec& levels, const Vec& couplings,
                               std::optional<Index> tagged = std::nullopt) {
  if (levels.size() != couplings.size())
    throw InvalidModel("star: levels and couplings must have equal length");
  if (levels.size() == 0) throw InvalidModel("star: no levels");
  Index a = -1;
  if (tagged) {
    a = *tagged;
  } else {
    for (Index i = 0; i < couplings.size(); ++i)
      if (couplings(i) != 0.0) {
        a = i;
        break;
      }
  }
  if (a < 0) throw InvalidModel("star: all couplings are zero (dot decoupled)");
  const Index n = levels.size();
  return make_network(levels, Mat::Zero(n, n), couplings, a);
}

// Dot-wire ring: an open chain of N sites with nearest-neighbour coupling C0,
// closed through the dot by Ca (site 0, tagged) and Cb (site N-1).
inline NetworkModel build_dot_wire_ring(Index n, double c0, double ca, double cb) {
  if (n < 2) throw InvalidModel("dot-wire ring needs N >= 2");
  if (c0 == 0.0) throw InvalidModel("dot-wire ring needs C0 != 0");
  if (ca == 0.0) throw InvalidModel("dot-wire ring needs Ca != 0");
  Mat c = Mat::Zero(n, n);
  for (Index i = 0; i + 1 < n; ++i) c(i, i + 1) = c(i + 1, i) = c0;
  Vec dot = Vec::Zero(n);
  dot(0) = ca;
  dot(n - 1) += cb;
  return make_network(Vec::Zero(n), std::move(c), std::move(dot), 0);
}

// Parity sign of ascending wire level j (0-based) for the chain with positive
// C0: the ratio <N|e_j> / <1|e_j>, i.e. whether the level couples to the dot
// through Ca + Cb (+1) or Ca - Cb (-1).
inline int wire_level_parity(Index n, Index j) {
  const Index l = n + 1;
  return ((l - j) % 2 == 0) ? 1 : -1;
}

namespace detail {

inline Vec ring_comb_levels(Index n, double delta) {
  Vec e(n);
  for (Index j = 0; j < n; ++j) e(j) = (static_cast<double>(j) - 0.5 * static_cast<double>(n - 1)) * delta;
  return e;
}

}  // namespace detail

// Constant-density surrogate of the dot-wire ring: N equally spaced levels
// centred on zero, with the wire's alternating parity and the dot couplings
// normalised so that the effective couplings are (Ca +- Cb)/sqrt(2) (exactly
// for even N; for odd N the two parity classes differ by the ratio of their
// populations). Realised as a dense real-symmetric network whose sites 0 and 1
// are the two ends of the wire.
inline NetworkModel build_ring_comb(Index n, double delta, double ca, double cb) {
  if (n < 2) throw InvalidModel("ring comb needs N >= 2");
  if (!(delta > 0.0)) throw InvalidModel("ring comb needs a positive level spacing");
  if (ca == 0.0) throw InvalidModel("ring comb needs Ca != 0");
  Index n_plus = 0;
  for (Index j = 0; j < n; ++j) n_plus += wire_level_parity(n, j) > 0 ? 1 : 0;
  const Index n_minus = n - n_plus;

  Mat ends(n, 2);
  for (Index j = 0; j < n; ++j) {
    const int s = wire_level_parity(n, j);
    const double w = 1.0 / std::sqrt(2.0 * static_cast<double>(s > 0 ? n_plus : n_minus));
    ends(j, 0) = w;
    ends(j, 1) = s * w;
  }
  // Complete rows <a|, <b| to an orthogonal site <-> level transform.
  Eigen::HouseholderQR<Mat> qr(ends);
  Mat q = qr.householderQ() * Mat::Identity(n, n);
  Mat v(n, n);  // v(i, j) = <i|e_j>
  v.row(0) = ends.col(0).transpose();
  v.row(1) = ends.col(1).transpose();
  for (Index r = 2; r < n; ++r) v.row(r) = q.col(r).transpose();

  Mat h = v * detail::ring_comb_levels(n, delta).asDiagonal() * v.transpose();
  h = 0.5 * (h + h.transpose()).eval();
  Vec onsite = h.diagonal();
  Mat c = h;
  c.diagonal().setZero();
  const double scale = std::sqrt(static_cast<double>(n) / 2.0);
  Vec dot = Vec::Zero(n);
  dot(0) = ca * scale;
  dot(1) = cb * scale;
  return make_network(std::move(onsite), std::move(c), std::move(dot), 0);
}

// Random real network with all-to-all couplings; deterministic for a seed on
// a given standard library.
inline NetworkModel build_random_network(Index n, std::uint64_t seed) {
  if (n < 1) throw InvalidModel("random network needs N >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> onsite(-1.0, 1.0);
  std::uniform_real_distribution<double> bond(-1.0, 1.0);
  Vec e(n);
  for (Index i = 0; i < n; ++i) e(i) = onsite(rng);
  Mat c = Mat::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) c(i, j) = c(j, i) = 0.5 * bond(rng);
  Vec dot(n);
  for (Index i = 0; i < n; ++i) dot(i) = bond(rng);
  if (std::abs(dot(0)) < 0.1) dot(0) = dot(0) < 0 ? -0.1 : 0.1;
  return make_network(std::move(e), std::move(c), std::move(dot), 0);
}

struct EnergyWindow {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool contains(double e) const { return e >= lo && e <= hi; }
};

// Network levels and their effective couplings to the dot. vectors(i, n) is
// <i|e_n>; it is empty for decompositions built directly from level data, in
// which case only the tagged row is known.
struct SpectralDecomposition {
  Vec levels;
  Mat vectors;
  Vec couplings;       // c_n
  Vec tagged_overlap;  // <a|e_n>
  double tagged_coupling = 0.0;
  Vec ratios;  // lambda_n; NaN where undefined (dark level)
  std::vector<std::vector<Index>> degenerate_groups;
  double mean_spacing = std::numeric_limits<double>::quiet_NaN();
  EnergyWindow window;

  Index size() const { return levels.size(); }
  bool has_vectors() const { return vectors.size() > 0; }
  bool is_coupled(Index n) const { return couplings(n) != 0.0; }
  bool has_ratio(Index n) const { return !std::isnan(ratios(n)); }

  std::vector<Index> coupled_levels() const {
    std::vector<Index> out;
    for (Index n = 0; n < size(); ++n)
      if (is_coupled(n)) out.push_back(n);
    return out;
  }

  // Sum of lambda_n q_n over levels with a defined ratio.
  double weighted_occupation(const Vec& q) const {
    double s = 0.0;
    for (Index n = 0; n < size(); ++n)
      if (has_ratio(n)) s += ratios(n) * q(n);
    return s;
  }
};

namespace detail {

inline double spacing_in_window(const Vec& levels, const EnergyWindow& w) {
  Index first = -1, last = -1;
  for (Index n = 0; n < levels.size(); ++n) {
    if (!w.contains(levels(n))) continue;
    if (first < 0) first = n;
    last = n;
  }
  if (first < 0 || last == first) return std::numeric_limits<double>::quiet_NaN();
  return (levels(last) - levels(first)) / static_cast<double>(last - first);
}

inline void fix_gauge(Eigen::Ref<Vec> v) {
  const double big = v.cwiseAbs().maxCoeff();
  for (Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) >= big * (1.0 - 1e-10)) {
      if (v(i) < 0.0) v = -v;
      return;
    }
  }
}

inline void fill_ratios(SpectralDecomposition& d) {
  d.ratios.resize(d.size());
  for (Index n = 0; n < d.size(); ++n)
    d.ratios(n) = d.is_coupled(n) ? d.tagged_overlap(n) * d.tagged_coupling / d.couplings(n)
                                  : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

inline Mat network_hamiltonian(const NetworkModel& model) {
  Mat h = model.couplings;
  h.diagonal() = model.onsite_energies;
  return h;
}

// Diagonalise the dot-free network. Degenerate levels are rotated so that a
// single combination carries the whole dot coupling; the rest are dark
// (c_n = 0, ratio undefined). Each eigenvector has its largest-magnitude
// entry positive.
inline SpectralDecomposition decompose(const NetworkModel& model,
                                       std::optional<EnergyWindow> window = std::nullopt) {
  model.validate();
  const Index n = model.size();
  Eigen::SelfAdjointEigenSolver<Mat> eig(network_hamiltonian(model));
  if (eig.info() != Eigen::Success) throw Error("network diagonalisation failed");

  SpectralDecomposition d;
  d.levels = eig.eigenvalues();
  d.vectors = eig.eigenvectors();
  for (Index k = 0; k < n; ++k) detail::fix_gauge(d.vectors.col(k));

  const double scale = std::max(1.0, d.levels.cwiseAbs().maxCoeff());
  const double deg_tol = 1e-9 * scale;
  const double coupling_floor = 1e-12 * std::max(1.0, model.dot_couplings.norm());

  for (Index k = 0; k < n;) {
    Index end = k + 1;
    while (end < n && d.levels(end) - d.levels(end - 1) <= deg_tol) ++end;
    const Index m = end - k;
    if (m > 1) {
      std::vector<Index> group;
      for (Index j = k; j < end; ++j) group.push_back(j);
      d.degenerate_groups.push_back(group);

      const double mean = d.levels.segment(k, m).mean();
      d.levels.segment(k, m).setConstant(mean);
      Mat block = d.vectors.middleCols(k, m);
      Vec w = block.transpose() * model.dot_couplings;
      if (w.norm() > coupling_floor) {
        // Householder reflector mapping w to a multiple of e_0: its first
        // column is the bright combination, the others are orthogonal to it.
        Eigen::HouseholderQR<Mat> qr{Mat(w)};
        Mat rot = qr.householderQ() * Mat::Identity(m, m);
        block = (block * rot).eval();
      }
      for (Index j = 0; j < m; ++j) detail::fix_gauge(block.col(j));
      d.vectors.middleCols(k, m) = block;
    }
    k = end;
  }

  d.couplings = d.vectors.transpose() * model.dot_couplings;
  for (Index k = 0; k < n; ++k)
    if (std::abs(d.couplings(k)) <= coupling_floor) d.couplings(k) = 0.0;
  d.tagged_overlap = d.vectors.row(model.tagged_site).transpose();
  d.tagged_coupling = model.tagged_coupling();
  detail::fill_ratios(d);
  d.window = window.value_or(EnergyWindow{});
  d.mean_spacing = detail::spacing_in_window(d.levels, d.window);
  return d;
}

// Decomposition given directly in the level basis (no site vectors).
inline SpectralDecomposition level_spectrum(Vec levels, Vec couplings, Vec tagged_overlap,
                                            double tagged_coupling,
                                            std::optional<EnergyWindow> window = std::nullopt) {
  const Index n = levels.size();
  if (n == 0) throw InvalidModel("level spectrum is empty");
  if (couplings.size() != n || tagged_overlap.size() != n)
    throw InvalidModel("level spectrum vectors must have equal length");
  for (Index k = 1; k < n; ++k)
    if (!(levels(k) > levels(k - 1)))
      throw InvalidModel("level spectrum must be strictly ascending");
  if (tagged_coupling == 0.0) throw InvalidModel("tagged coupling must be nonzero");
  SpectralDecomposition d;
  d.levels = std::move(levels);
  d.couplings = std::move(couplings);
  d.tagged_overlap = std::move(tagged_overlap);
  d.tagged_coupling = tagged_coupling;
  detail::fill_ratios(d);
  d.window = window.value_or(EnergyWindow{});
  d.mean_spacing = detail::spacing_in_window(d.levels, d.window);
  return d;
}

// Level-basis form of the constant-density ring with the (Ca +- Cb)/sqrt(2)
// convention: splitting ratios Ca/(Ca +- Cb) alternate with parity.
inline SpectralDecomposition ring_comb_spectrum(Index n, double delta, double ca, double cb) {
  if (n < 2) throw InvalidModel("ring comb needs N >= 2");
  if (!(delta > 0.0)) throw InvalidModel("ring comb needs a positive level spacing");
  if (ca == 0.0) throw InvalidModel("ring comb needs Ca != 0");
  Vec c(n);
  for (Index j = 0; j < n; ++j) c(j) = (ca + wire_level_parity(n, j) * cb) / std::sqrt(2.0);
  return level_spectrum(detail::ring_comb_levels(n, delta), std::move(c),
                        Vec::Constant(n, 1.0 / std::sqrt(2.0)), ca);
}

// Splitting ratios of an arbitrary dot bond (not necessarily the tagged one).
inline Vec bond_splitting_ratios(const NetworkModel& model, const SpectralDecomposition& d,
                                 Index site) {
  if (!d.has_vectors()) throw Error("bond ratios need site vectors");
  Vec r(d.size());
  for (Index n = 0; n < d.size(); ++n)
    r(n) = d.is_coupled(n) ? d.vectors(site, n) * model.dot_couplings(site) / d.couplings(n)
                           : std::numeric_limits<double>::quiet_NaN();
  return r;
}

struct FullHamiltonian {
  CMat matrix;  // (N+1) x (N+1), dot at index 0
  double u = 0.0;
  double phi = 0.0;
};

// Dot potential u on index 0; the (a,0) element carries the test flux e^{i phi}.
inline FullHamiltonian assemble(const NetworkModel& model, double u, double phi) {
  const Index n = model.size();
  CMat h = CMat::Zero(n + 1, n + 1);
  h(0, 0) = u;
  h.bottomRightCorner(n, n) = network_hamiltonian(model).cast<Complex>();
  for (Index i = 0; i < n; ++i) {
    h(i + 1, 0) = model.dot_couplings(i);
    h(0, i + 1) = model.dot_couplings(i);
  }
  if (phi != 0.0) {
    const Index a = model.tagged_site + 1;
    h(a, 0) = model.dot_couplings(model.tagged_site) * std::polar(1.0, phi);
    h(0, a) = std::conj(h(a, 0));
  }
  return {std::move(h), u, phi};
}

}  // namespace sweepnet
