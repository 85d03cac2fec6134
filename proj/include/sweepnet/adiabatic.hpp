#pragma once

// Instantaneous (adiabatic) eigenstates of the dot + network system in the
// level basis, the geometric conductance by two independent routes, and the
// closed forms of the constant-density two-parity continuum.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Eigenvalues>

#include "sweepnet/network.hpp"
#include "sweepnet/secular.hpp"
#include "sweepnet/types.hpp"

namespace sweepnet {

// Coupled levels of a decomposition, laid out for the secular solver.
class StarView {
 public:
  explicit StarView(const SpectralDecomposition& d) : decomp_(&d) {
    for (Index n = 0; n < d.size(); ++n) {
      if (!d.is_coupled(n)) continue;
      index_.push_back(n);
      poles_.push_back(d.levels(n));
      couplings_.push_back(d.couplings(n));
      weights_.push_back(d.couplings(n) * d.couplings(n));
    }
    for (std::size_t k = 1; k < poles_.size(); ++k)
      if (!(poles_[k] > poles_[k - 1]))
        throw InvalidModel("coupled levels must be non-degenerate (rotate degenerate subspaces first)");
  }

  const SpectralDecomposition& decomposition() const { return *decomp_; }
  Index coupled_count() const { return static_cast<Index>(poles_.size()); }
  Index branch_count() const { return coupled_count() + 1; }
  std::span<const double> poles() const { return poles_; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> couplings() const { return couplings_; }
  Index level_of(Index k) const { return index_[static_cast<std::size_t>(k)]; }

 private:
  const SpectralDecomposition* decomp_;
  std::vector<Index> index_;
  std::vector<double> poles_, couplings_, weights_;
};

namespace detail {

inline void check_off_pole(const SpectralDecomposition& d, double e) {
  for (Index n = 0; n < d.size(); ++n)
    if (d.is_coupled(n) && e == d.levels(n)) throw PoleError("energy coincides with a coupled level");
}

}  // namespace detail

// g(E) = sum_n |c_n|^2 / (E - e_n)
inline double g_of_E(const SpectralDecomposition& d, double e) {
  detail::check_off_pole(d, e);
  double s = 0.0;
  for (Index n = 0; n < d.size(); ++n)
    if (d.is_coupled(n)) s += d.couplings(n) * d.couplings(n) / (e - d.levels(n));
  return s;
}

inline double g_prime(const SpectralDecomposition& d, double e) {
  detail::check_off_pole(d, e);
  double s = 0.0;
  for (Index n = 0; n < d.size(); ++n) {
    if (!d.is_coupled(n)) continue;
    const double r = 1.0 / (e - d.levels(n));
    s -= d.couplings(n) * d.couplings(n) * r * r;
  }
  return s;
}

// Roots of g(E) = E - u, ascending: one below the coupled levels, one in each
// gap, one above. Uncoupled (dark) levels are eigenvalues too but are not
// returned here.
inline Vec secular_roots(const SpectralDecomposition& d, double u) {
  StarView view(d);
  const auto roots = secular::solve_all(u, view.poles(), view.weights());
  Vec out(static_cast<Index>(roots.size()));
  for (std::size_t j = 0; j < roots.size(); ++j) out(static_cast<Index>(j)) = roots[j].value;
  return out;
}

// Adiabatic eigenstate on one branch. The branch index counts secular roots
// from the bottom; it is confined between two consecutive coupled levels for
// all u, so the branch identity needs no tracking.
struct BranchState {
  double u = 0.0;
  double energy = 0.0;
  double p = 0.0;       // dot occupation, 1 / (1 - g'(E))
  Vec q;                // level occupations (zero on dark levels)
  Vec amplitudes;       // real level amplitudes sqrt(p) c_n / (E - e_n)
  double dE_du = 0.0;   // equals p
  double g2 = 0.0;      // g''(E)
  double lower = -std::numeric_limits<double>::infinity();  // bracketing levels
  double upper = std::numeric_limits<double>::infinity();
};

inline BranchState branch_occupations(const StarView& view, double u, Index branch,
                                      std::optional<double> guess = std::nullopt) {
  if (branch < 0 || branch >= view.branch_count()) throw Error("branch index out of range");
  const auto& d = view.decomposition();
  const auto root = secular::solve_root(u, view.poles(), view.weights(), branch, guess);
  const Index k = view.coupled_count();

  BranchState s;
  s.u = u;
  s.energy = root.value;
  if (k == 0) {
    s.p = 1.0;
    s.q = Vec::Zero(d.size());
    s.amplitudes = Vec::Zero(d.size());
    s.dE_du = 1.0;
    return s;
  }
  Vec ratio(k);  // c_n / (E - e_n)
  double sum_sq = 0.0, g2 = 0.0;
  for (Index m = 0; m < k; ++m) {
    const double inv = 1.0 / root.minus_pole(view.poles(), m);
    ratio(m) = view.couplings()[m] * inv;
    sum_sq += ratio(m) * ratio(m);
    g2 += 2.0 * view.weights()[m] * inv * inv * inv;
  }
  s.p = 1.0 / (1.0 + sum_sq);
  s.q = Vec::Zero(d.size());
  s.amplitudes = Vec::Zero(d.size());
  const double sp = std::sqrt(s.p);
  for (Index m = 0; m < k; ++m) {
    s.q(view.level_of(m)) = ratio(m) * ratio(m) * s.p;
    s.amplitudes(view.level_of(m)) = ratio(m) * sp;
  }
  s.dE_du = s.p;
  s.g2 = g2;
  if (branch > 0) s.lower = view.poles()[branch - 1];
  if (branch < k) s.upper = view.poles()[branch];
  return s;
}

inline BranchState branch_occupations(const SpectralDecomposition& d, double u, Index branch) {
  return branch_occupations(StarView(d), u, branch);
}

// G = d/du [ sum_n lambda_n q_n ] along the branch, by analytic
// differentiation: dE/du = p, dp/du = p^3 g''(E).
inline double splitting_G(const StarView& view, Index branch, double u,
                          std::optional<double> guess = std::nullopt) {
  const auto& d = view.decomposition();
  const auto s = branch_occupations(view, u, branch, guess);
  const Index k = view.coupled_count();
  const double dp = s.p * s.p * s.p * s.g2;
  double g = 0.0;
  for (Index m = 0; m < k; ++m) {
    const Index n = view.level_of(m);
    if (!d.has_ratio(n)) throw Error("coupled level without a splitting ratio");
    const double inv = 1.0 / (s.energy - d.levels(n));
    const double w = view.weights()[m];
    const double dq = w * (dp * inv * inv - 2.0 * s.p * s.dE_du * inv * inv * inv);
    g += d.ratios(n) * dq;
  }
  return g;
}

inline double splitting_G(const SpectralDecomposition& d, Index branch, double u) {
  return splitting_G(StarView(d), branch, u);
}

// A sampled adiabatic branch.
struct AdiabaticBranch {
  Index branch_index = 0;
  std::vector<BranchState> samples;
  double bracket_low = -std::numeric_limits<double>::infinity();
  double bracket_high = std::numeric_limits<double>::infinity();
};

inline AdiabaticBranch trace_branch(const SpectralDecomposition& d, Index branch, const Vec& u_grid) {
  StarView view(d);
  AdiabaticBranch b;
  b.branch_index = branch;
  std::optional<double> guess;
  for (Index i = 0; i < u_grid.size(); ++i) {
    if (i > 0 && !(u_grid(i) > u_grid(i - 1))) throw Error("u grid must be strictly increasing");
    b.samples.push_back(branch_occupations(view, u_grid(i), branch, guess));
    guess = b.samples.back().energy;
  }
  if (!b.samples.empty()) {
    b.bracket_low = b.samples.front().lower;
    b.bracket_high = b.samples.front().upper;
  }
  return b;
}

struct BerryKuboOptions {
  double du = 0.0;            // 0 selects 1e-4 * max(1, |u|)
  double dphi = 1e-4;
  bool richardson = true;     // combine steps (h, h/2)
  double gap_threshold = 1e-6;
};

struct BerryKuboResult {
  double G = 0.0;
  double min_gap = 0.0;
  bool near_degenerate = false;
};

namespace detail {

inline CVec eigenvector_at(const NetworkModel& model, double u, double phi, Index branch,
                           Vec* energies = nullptr) {
  Eigen::SelfAdjointEigenSolver<CMat> eig(assemble(model, u, phi).matrix);
  if (eig.info() != Eigen::Success) throw Error("full Hamiltonian diagonalisation failed");
  if (energies) *energies = eig.eigenvalues();
  return eig.eigenvectors().col(branch);
}

inline CVec align_phase(const CVec& v, const CVec& ref) {
  const Complex ov = ref.dot(v);  // <ref|v>
  const double mag = std::abs(ov);
  if (mag == 0.0) throw Error("eigenvector lost overlap with its reference");
  return v * (std::conj(ov) / mag);
}

inline double berry_kubo_raw(const NetworkModel& model, double u, Index branch, double du,
                             double dphi, const CVec& ref) {
  const CVec up = align_phase(eigenvector_at(model, u + du, 0.0, branch), ref);
  const CVec um = align_phase(eigenvector_at(model, u - du, 0.0, branch), ref);
  const CVec pp = align_phase(eigenvector_at(model, u, dphi, branch), ref);
  const CVec pm = align_phase(eigenvector_at(model, u, -dphi, branch), ref);
  const CVec d_u = (up - um) / (2.0 * du);
  const CVec d_phi = (pp - pm) / (2.0 * dphi);
  // Oriented so that G > 0 is flow from the dot into site a.
  return -2.0 * d_phi.dot(d_u).imag();
}

}  // namespace detail

// G = 2 Im < d_phi Psi | d_u Psi > at phi = 0, by central differences of
// phase-aligned eigenvectors of the full Hamiltonian, signed positive for
// flow from the dot into the tagged site. `branch` counts all
// N+1 eigenvalues from the bottom.
inline BerryKuboResult berry_kubo_G(const NetworkModel& model, double u, Index branch,
                                    const BerryKuboOptions& opt = {}) {
  const Index dim = model.size() + 1;
  if (branch < 0 || branch >= dim) throw Error("branch index out of range");
  Vec energies;
  CVec ref = detail::eigenvector_at(model, u, 0.0, branch, &energies);
  Index big = 0;
  ref.cwiseAbs().maxCoeff(&big);
  ref *= std::conj(ref(big)) / std::abs(ref(big));

  BerryKuboResult r;
  r.min_gap = std::numeric_limits<double>::infinity();
  if (branch > 0) r.min_gap = std::min(r.min_gap, energies(branch) - energies(branch - 1));
  if (branch + 1 < dim) r.min_gap = std::min(r.min_gap, energies(branch + 1) - energies(branch));
  r.near_degenerate = r.min_gap < opt.gap_threshold;

  const double du = opt.du > 0.0 ? opt.du : 1e-4 * std::max(1.0, std::abs(u));
  const double coarse = detail::berry_kubo_raw(model, u, branch, du, opt.dphi, ref);
  if (!opt.richardson) {
    r.G = coarse;
    return r;
  }
  const double fine = detail::berry_kubo_raw(model, u, branch, 0.5 * du, 0.5 * opt.dphi, ref);
  r.G = (4.0 * fine - coarse) / 3.0;
  return r;
}

// ---------------------------------------------------------------------------
// Constant-density two-parity continuum.

struct ContinuumParams {
  double c_plus = 0.0;
  double c_minus = 0.0;
  double C_eff = 0.0;
  double Gamma = 0.0;
  double theta = 0.0;
  double Delta = 0.0;

  static ContinuumParams from_couplings(double c_plus, double c_minus, double delta) {
    if (!(delta > 0.0)) throw Error("continuum parameters need a positive level spacing");
    const double sum = c_plus * c_plus + c_minus * c_minus;
    if (!(sum > 0.0)) throw Error("continuum parameters need a nonzero coupling");
    ContinuumParams p;
    p.c_plus = c_plus;
    p.c_minus = c_minus;
    p.Delta = delta;
    p.C_eff = 0.5 * kPi * c_plus * c_minus / delta;
    p.Gamma = kPi * sum / delta;
    p.theta = std::asin((c_plus * c_plus - c_minus * c_minus) / sum);
    return p;
  }

  // Ring end couplings with the 1/sqrt(2) normalisation absorbed.
  static ContinuumParams from_ring(double ca, double cb, double delta) {
    return from_couplings((ca + cb) / std::sqrt(2.0), (ca - cb) / std::sqrt(2.0), delta);
  }
};

// g(E) of the infinite comb with c_minus on levels at even multiples of Delta
// and c_plus on the odd multiples.
inline double comb_g(const ContinuumParams& p, double e) {
  const double x = 0.5 * kPi * e / p.Delta;
  const double s = std::sin(x), c = std::cos(x);
  if (s == 0.0 || c == 0.0) throw PoleError("energy coincides with a comb level");
  return 0.5 * kPi / p.Delta * (p.c_minus * p.c_minus * c / s - p.c_plus * p.c_plus * s / c);
}

// Root of comb_g(E) = E - u in (m Delta, (m+1) Delta), from the quadratic for
// cot(pi E / 2 Delta): the root satisfies E = 2k Delta + (2 Delta/pi) acot X(E)
// with X = (Delta / pi c_-^2) [(E-u) +- sqrt((E-u)^2 + (pi c_+ c_- / Delta)^2)],
// the sign following the parity of the interval. E - T(E) is increasing, so a
// safeguarded Newton iteration converges.
inline double comb_secular_root(const ContinuumParams& p, double u, long m) {
  const double dl = p.Delta;
  const double a2 = p.c_minus * p.c_minus;
  const double b = kPi * p.c_plus * p.c_minus / dl;
  const bool upper_half = (m % 2 + 2) % 2 == 1;  // cot < 0 on odd intervals
  const double sign = upper_half ? -1.0 : 1.0;
  const double base = 2.0 * dl * std::floor(static_cast<double>(m) / 2.0);
  double lo = static_cast<double>(m) * dl, hi = lo + dl;
  auto t_of = [&](double e, double* dt) {
    const double y = e - u;
    const double root = std::sqrt(y * y + b * b);
    const double x = dl / (kPi * a2) * (y + sign * root);
    const double dx = dl / (kPi * a2) * (1.0 + sign * y / root);
    // acot on (0, pi): pi/2 - atan(x)
    if (dt) *dt = -(2.0 * dl / kPi) * dx / (1.0 + x * x);
    return base + (2.0 * dl / kPi) * (0.5 * kPi - std::atan(x));
  };
  double e = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    double dt = 0.0;
    const double f = e - t_of(e, &dt);
    if (f == 0.0) break;
    if (f < 0.0) lo = e; else hi = e;
    double next = e - f / (1.0 - dt);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - e);
    e = next;
    if (step <= 1e-15 * std::max(1.0, std::abs(e))) break;
  }
  return e;
}

// Distorted Lorentzian L[x; Gamma, theta].
inline double distorted_lorentzian(double x, double gamma, double theta) {
  const double s = std::sin(theta);
  if (std::abs(s) >= 1.0) throw Error("distorted Lorentzian is degenerate for |sin theta| = 1");
  const double c2 = std::cos(theta) * std::cos(theta);
  const double hw = 0.5 * gamma;
  const double den = x * x + c2 * hw * hw;
  return (1.0 / kPi) / (1.0 + s * x / std::sqrt(den)) * (c2 * hw / den);
}

// Collective crossing lineshape (lambda_- - lambda_+) 2 C^2 / (4 C^2 + (u-E)^2)^{3/2}.
inline double collective_peak_G(const ContinuumParams& p, double lambda_minus, double lambda_plus,
                                double u, double e) {
  if (!(p.C_eff > 0.0)) throw Error("collective lineshape needs C_eff > 0");
  const double c2 = p.C_eff * p.C_eff;
  const double x = u - e;
  return (lambda_minus - lambda_plus) * 2.0 * c2 / std::pow(4.0 * c2 + x * x, 1.5);
}

}  // namespace sweepnet
