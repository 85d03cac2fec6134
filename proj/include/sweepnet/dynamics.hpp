#pragma once

// Time-dependent propagation under a sweep of the dot potential, with the
// tagged-bond current computed two ways, charge accumulation, Wigner decay of
// a moving level, regime classification and non-interacting superposition.
//
// Units: hbar = 1. For H_{a0} = C_a the probability current from the dot into
// site a is I = 2 C_a Im[conj(Psi_a) Psi_0].

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <Eigen/Eigenvalues>

#include "sweepnet/adiabatic.hpp"
#include "sweepnet/network.hpp"
#include "sweepnet/secular.hpp"
#include "sweepnet/types.hpp"

namespace sweepnet {

enum class SweepKind { linear, tabulated };

struct SweepProtocol {
  SweepKind kind = SweepKind::linear;
  double rate = 0.0;     // linear: u(t) = u_start + rate t
  double u_start = 0.0;
  double u_end = 0.0;
  double duration = 0.0;
  Vec t_grid;            // output sampling times in [0, duration]
  Vec tab_times, tab_values;

  double u(double t) const {
    if (kind == SweepKind::linear) return u_start + rate * t;
    const Index n = tab_times.size();
    if (t <= tab_times(0)) return tab_values(0);
    if (t >= tab_times(n - 1)) return tab_values(n - 1);
    const auto* first = tab_times.data();
    const Index k = static_cast<Index>(std::upper_bound(first, first + n, t) - first) - 1;
    const double s = (t - tab_times(k)) / (tab_times(k + 1) - tab_times(k));
    return tab_values(k) + s * (tab_values(k + 1) - tab_values(k));
  }

  // Times at which u(t) may have a kink; steps never straddle them.
  std::vector<double> breakpoints() const {
    std::vector<double> b;
    if (kind == SweepKind::tabulated)
      for (Index i = 0; i < tab_times.size(); ++i) b.push_back(tab_times(i));
    return b;
  }

  void validate() const {
    if (!(duration > 0.0) || !std::isfinite(duration)) throw Error("protocol duration must be positive");
    if (t_grid.size() == 0) throw Error("protocol needs at least one output time");
    for (Index i = 0; i < t_grid.size(); ++i) {
      if (t_grid(i) < 0.0 || t_grid(i) > duration * (1.0 + 1e-14)) throw Error("output time outside the protocol");
      if (i > 0 && !(t_grid(i) > t_grid(i - 1))) throw Error("output times must be strictly increasing");
    }
    if (kind == SweepKind::linear) {
      if (rate > 0.0 && !(u_end > u_start)) throw Error("u_end must exceed u_start for a positive rate");
      if (rate < 0.0 && !(u_end < u_start)) throw Error("u_end must be below u_start for a negative rate");
    } else {
      const Index n = tab_times.size();
      if (n < 2 || tab_values.size() != n) throw Error("tabulated protocol needs matching times and values");
      if (tab_times(0) != 0.0) throw Error("tabulated protocol must start at t = 0");
      for (Index i = 1; i < n; ++i)
        if (!(tab_times(i) > tab_times(i - 1))) throw Error("tabulated times must be strictly increasing");
    }
  }

  static SweepProtocol linear(double u_start, double u_end, double rate, Index samples) {
    if (rate == 0.0) throw Error("linear sweep needs a nonzero rate (use hold)");
    if (samples < 2) throw Error("a sweep needs at least two output samples");
    SweepProtocol p;
    p.kind = SweepKind::linear;
    p.rate = rate;
    p.u_start = u_start;
    p.u_end = u_end;
    p.duration = (u_end - u_start) / rate;
    p.t_grid = Vec::LinSpaced(samples, 0.0, p.duration);
    p.validate();
    return p;
  }

  static SweepProtocol hold(double u, double duration, Index samples) {
    if (samples < 2) throw Error("a hold needs at least two output samples");
    SweepProtocol p;
    p.kind = SweepKind::linear;
    p.u_start = p.u_end = u;
    p.duration = duration;
    p.t_grid = Vec::LinSpaced(samples, 0.0, duration);
    p.validate();
    return p;
  }

  // Piecewise-linear u(t) through (times, values).
  static SweepProtocol tabulated(Vec times, Vec values, Index samples) {
    if (samples < 2) throw Error("a sweep needs at least two output samples");
    SweepProtocol p;
    p.kind = SweepKind::tabulated;
    p.tab_times = std::move(times);
    p.tab_values = std::move(values);
    if (p.tab_times.size() < 2) throw Error("tabulated protocol needs at least two nodes");
    p.duration = p.tab_times(p.tab_times.size() - 1);
    p.u_start = p.tab_values(0);
    p.u_end = p.tab_values(p.tab_values.size() - 1);
    p.t_grid = Vec::LinSpaced(samples, 0.0, p.duration);
    p.validate();
    return p;
  }

  SweepProtocol with_grid(Vec grid) const {
    SweepProtocol p = *this;
    p.t_grid = std::move(grid);
    p.validate();
    return p;
  }
};

enum class Basis { site, level };

// Amplitudes over (dot, sites...) or (dot, levels...), index 0 being the dot.
struct WaveState {
  double time = 0.0;
  CVec amplitudes;
  Basis basis = Basis::site;

  double norm_defect() const { return std::abs(amplitudes.squaredNorm() - 1.0); }
};

inline WaveState dot_state(Index network_size, Basis basis = Basis::site) {
  WaveState s;
  s.amplitudes = CVec::Zero(network_size + 1);
  s.amplitudes(0) = 1.0;
  s.basis = basis;
  return s;
}

inline WaveState level_state(const SpectralDecomposition& d, Index n) {
  if (n < 0 || n >= d.size()) throw Error("level index out of range");
  WaveState s;
  s.amplitudes = CVec::Zero(d.size() + 1);
  s.amplitudes(n + 1) = 1.0;
  s.basis = Basis::level;
  return s;
}

// Instantaneous eigenstate on a secular branch at potential u.
inline WaveState branch_state(const SpectralDecomposition& d, double u, Index branch) {
  const auto b = branch_occupations(d, u, branch);
  WaveState s;
  s.amplitudes = CVec::Zero(d.size() + 1);
  s.amplitudes(0) = std::sqrt(b.p);
  s.amplitudes.tail(d.size()) = b.amplitudes.cast<Complex>();
  s.amplitudes /= s.amplitudes.norm();
  s.basis = Basis::level;
  return s;
}

inline WaveState to_site_basis(const SpectralDecomposition& d, const WaveState& s) {
  if (s.basis == Basis::site) return s;
  if (!d.has_vectors()) throw Error("site basis needs decomposition vectors");
  WaveState out = s;
  out.basis = Basis::site;
  out.amplitudes.tail(d.size()) = d.vectors.cast<Complex>() * s.amplitudes.tail(d.size());
  return out;
}

inline WaveState to_level_basis(const SpectralDecomposition& d, const WaveState& s) {
  if (s.basis == Basis::level) return s;
  if (!d.has_vectors()) throw Error("level basis needs decomposition vectors");
  WaveState out = s;
  out.basis = Basis::level;
  out.amplitudes.tail(d.size()) = d.vectors.transpose().cast<Complex>() * s.amplitudes.tail(d.size());
  return out;
}

enum class Backend { automatic, site_dense, level };

struct PropagationOptions {
  double tolerance = 1e-10;  // per-step bound on the state step-doubling difference and the charge quadrature error
  double max_step = std::numeric_limits<double>::infinity();
  double norm_abort = 1e-7;
  Backend backend = Backend::automatic;
  Index dense_limit = 64;  // automatic uses the site backend up to this many sites
  std::string tag = "injection";
};

struct CurrentRecord {
  std::string tag;
  Vec times, u, p;
  Mat q;  // samples x levels
  Vec I_operator, I_splitting, Q_cumulative;
  Vec ratios;  // lambda_n (NaN on dark levels)
  double max_norm_drift = 0.0;
  double max_identity_residual = 0.0;  // max |I_operator - I_splitting|
  Index steps = 0;
  Index rejected_steps = 0;
  WaveState final_state;

  Index samples() const { return times.size(); }

  double max_current() const {
    return std::max(I_operator.size() ? I_operator.cwiseAbs().maxCoeff() : 0.0,
                    I_splitting.size() ? I_splitting.cwiseAbs().maxCoeff() : 0.0);
  }
  double identity_scale() const { return std::max(1.0, max_current()); }
  double relative_identity_residual() const { return max_identity_residual / identity_scale(); }

  double max_probability_defect() const {
    double worst = 0.0;
    for (Index i = 0; i < samples(); ++i) worst = std::max(worst, std::abs(p(i) + q.row(i).sum() - 1.0));
    return worst;
  }

  double weighted_occupation(Index i) const {
    double s = 0.0;
    for (Index n = 0; n < ratios.size(); ++n)
      if (!std::isnan(ratios(n))) s += ratios(n) * q(i, n);
    return s;
  }
};

namespace detail {

struct Observation {
  double p = 0.0;
  Vec q;
  double I_op = 0.0;
  double I_split = 0.0;
  double dI_op = 0.0;  // d/dt of I_op at fixed u(t) continuity
};

// Hamiltonian action in the level basis: (dot, levels).
inline CVec level_apply(const SpectralDecomposition& d, double u, const CVec& y) {
  const Index n = d.size();
  CVec out(n + 1);
  out(0) = u * y(0);
  for (Index k = 0; k < n; ++k) {
    out(0) += d.couplings(k) * y(k + 1);
    out(k + 1) = d.levels(k) * y(k + 1) + d.couplings(k) * y(0);
  }
  return out;
}

// Splitting-ratio current from level amplitudes: sum_n lambda_n 2 c_n Im[conj(psi_n) psi_0].
inline double splitting_current(const SpectralDecomposition& d, const Complex* psi_levels, Complex psi0) {
  double s = 0.0;
  for (Index k = 0; k < d.size(); ++k)
    if (d.has_ratio(k)) s += d.ratios(k) * 2.0 * d.couplings(k) * std::imag(std::conj(psi_levels[k]) * psi0);
  return s;
}

// Dense site-basis stepper with a 4th-order Magnus exponential.
class SiteStepper {
 public:
  SiteStepper(const NetworkModel& model, const SpectralDecomposition& d, const SweepProtocol& pr)
      : model_(&model), d_(&d), pr_(&pr) {
    h0_ = assemble(model, 0.0, 0.0).matrix;
  }

  void step(CVec& y, double t, double h) const {
    const double g = std::sqrt(3.0) / 6.0;
    const double u1 = pr_->u(t + h * (0.5 - g)), u2 = pr_->u(t + h * (0.5 + g));
    CMat k = h0_;
    k(0, 0) = 0.5 * (u1 + u2);
    // i sqrt(3) h / 12 [H1, H2] = i beta [H0, P], P the dot projector.
    const double beta = std::sqrt(3.0) * h * (u2 - u1) / 12.0;
    if (beta != 0.0) {
      const Index n = model_->size();
      for (Index i = 1; i <= n; ++i) {
        const Complex c = h0_(i, 0);
        k(i, 0) += Complex(0.0, beta) * c;
        k(0, i) -= Complex(0.0, beta) * c;
      }
    }
    eig_.compute(k);
    if (eig_.info() != Eigen::Success) throw PropagationError("step diagonalisation failed");
    CVec x = eig_.eigenvectors().adjoint() * y;
    for (Index j = 0; j < x.size(); ++j) x(j) *= std::polar(1.0, -h * eig_.eigenvalues()(j));
    y = eig_.eigenvectors() * x;
  }

  Observation observe(const CVec& y, double u) const {
    const Index n = model_->size();
    const Index a = model_->tagged_site + 1;
    const double ca = model_->tagged_coupling();
    Observation o;
    o.p = std::norm(y(0));
    const CVec psi = d_->vectors.transpose().cast<Complex>() * y.tail(n);
    o.q = psi.cwiseAbs2();
    o.I_op = 2.0 * ca * std::imag(std::conj(y(a)) * y(0));
    o.I_split = splitting_current(*d_, psi.data(), y(0));
    CMat h = h0_;
    h(0, 0) = u;
    const CVec dy = Complex(0.0, -1.0) * (h * y);
    o.dI_op = 2.0 * ca * std::imag(std::conj(dy(a)) * y(0) + std::conj(y(a)) * dy(0));
    return o;
  }

 private:
  const NetworkModel* model_;
  const SpectralDecomposition* d_;
  const SweepProtocol* pr_;
  CMat h0_;
  mutable Eigen::SelfAdjointEigenSolver<CMat> eig_;
};

// Level-basis stepper: the Magnus generator is an arrowhead with couplings
// c_n (1 + i beta); a diagonal phase on the dot maps it to the real
// arrowhead with couplings sqrt(1 + beta^2) c_n, solved by secular roots.
class LevelStepper {
 public:
  LevelStepper(const SpectralDecomposition& d, const SweepProtocol& pr) : d_(&d), pr_(&pr), view_(d) {
    for (Index n = 0; n < d.size(); ++n)
      if (!d.is_coupled(n)) dark_.push_back(n);
    const Index k = view_.coupled_count();
    weights_.resize(k);
    couplings_.resize(k);
    if (k <= 2048) {
      inv_gaps_.resize(k, k);
      for (Index n = 0; n < k; ++n)
        for (Index m = 0; m < k; ++m) inv_gaps_(m, n) = n == m ? 0.0 : 1.0 / (view_.poles()[m] - view_.poles()[n]);
    }
  }

  void step(CVec& y, double t, double h) const {
    const double g = std::sqrt(3.0) / 6.0;
    const double u1 = pr_->u(t + h * (0.5 - g)), u2 = pr_->u(t + h * (0.5 + g));
    const double ubar = 0.5 * (u1 + u2);
    const double beta = std::sqrt(3.0) * h * (u2 - u1) / 12.0;
    const double r = std::sqrt(1.0 + beta * beta);
    const double theta = std::atan(beta);
    const Index k = view_.coupled_count();
    for (Index m = 0; m < k; ++m) {
      couplings_[m] = r * view_.couplings()[m];
      weights_[m] = couplings_[m] * couplings_[m];
    }
    // Warm start: roots move with slope p_j = (dot component)^2 in u.
    if (!guesses_.empty())
      for (std::size_t j = 0; j < guesses_.size(); ++j) guesses_[j] += slopes_[j] * (ubar - last_ubar_);
    auto roots = secular::solve_all(ubar, view_.poles(), weights_, guesses_);
    secular::ArrowheadBasis basis(view_.poles(), couplings_, std::move(roots),
                                  inv_gaps_.size() ? &inv_gaps_ : nullptr);
    guesses_.resize(static_cast<std::size_t>(k + 1));
    slopes_.resize(static_cast<std::size_t>(k + 1));
    for (Index j = 0; j <= k; ++j) {
      guesses_[j] = basis.energy(j);
      slopes_[j] = basis.dot_component(j) * basis.dot_component(j);
    }
    last_ubar_ = ubar;

    work_.resize(k + 1);
    work_(0) = y(0) * std::polar(1.0, theta);
    for (Index m = 0; m < k; ++m) work_(m + 1) = y(view_.level_of(m) + 1);
    basis.evolve(work_, h);
    y(0) = work_(0) * std::polar(1.0, -theta);
    for (Index m = 0; m < k; ++m) y(view_.level_of(m) + 1) = work_(m + 1);
    for (Index n : dark_) y(n + 1) *= std::polar(1.0, -h * d_->levels(n));
  }

  Observation observe(const CVec& y, double u) const {
    const Index n = d_->size();
    const double ca = d_->tagged_coupling;
    Observation o;
    o.p = std::norm(y(0));
    o.q = y.tail(n).cwiseAbs2();
    const Complex psi_a = (d_->tagged_overlap.cast<Complex>().array() * y.tail(n).array()).sum();
    o.I_op = 2.0 * ca * std::imag(std::conj(psi_a) * y(0));
    o.I_split = splitting_current(*d_, y.data() + 1, y(0));
    const CVec dy = Complex(0.0, -1.0) * level_apply(*d_, u, y);
    const Complex dpsi_a = (d_->tagged_overlap.cast<Complex>().array() * dy.tail(n).array()).sum();
    o.dI_op = 2.0 * ca * std::imag(std::conj(dpsi_a) * y(0) + std::conj(psi_a) * dy(0));
    return o;
  }

 private:
  const SpectralDecomposition* d_;
  const SweepProtocol* pr_;
  StarView view_;
  std::vector<Index> dark_;
  Mat inv_gaps_;
  mutable std::vector<double> weights_, couplings_, guesses_, slopes_;
  mutable double last_ubar_ = 0.0;
  mutable CVec work_;
};

template <class Stepper>
CurrentRecord drive(const Stepper& st, const SpectralDecomposition& d, const SweepProtocol& pr, CVec y,
                    Basis basis, const PropagationOptions& opt) {
  pr.validate();
  if (std::abs(y.squaredNorm() - 1.0) > 1e-9) throw Error("initial state must be normalised");
  if (!(opt.tolerance > 0.0)) throw Error("tolerance must be positive");

  const Index ns = pr.t_grid.size();
  const Index nl = d.size();
  CurrentRecord rec;
  rec.tag = opt.tag;
  rec.times = pr.t_grid;
  rec.u.resize(ns);
  rec.p.resize(ns);
  rec.q.resize(ns, nl);
  rec.I_operator.resize(ns);
  rec.I_splitting.resize(ns);
  rec.Q_cumulative.resize(ns);
  rec.ratios = d.ratios;

  // Stop points: output times and protocol kinks, merged.
  std::vector<double> stops(pr.t_grid.data(), pr.t_grid.data() + ns);
  for (double b : pr.breakpoints())
    if (b > 0.0 && b < pr.duration) stops.push_back(b);
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());

  double t = 0.0, charge = 0.0;
  auto obs = st.observe(y, pr.u(0.0));
  Index next_sample = 0;
  auto store = [&](double time, const Observation& o) {
    while (next_sample < ns && pr.t_grid(next_sample) <= time) {
      const Index i = next_sample++;
      rec.u(i) = pr.u(time);
      rec.p(i) = o.p;
      rec.q.row(i) = o.q.transpose();
      rec.I_operator(i) = o.I_op;
      rec.I_splitting(i) = o.I_split;
      rec.Q_cumulative(i) = charge;
      rec.max_identity_residual = std::max(rec.max_identity_residual, std::abs(o.I_op - o.I_split));
    }
  };
  store(0.0, obs);

  double h = std::min({opt.max_step, pr.duration, 0.1});
  CVec full, half, mid;
  for (double target : stops) {
    if (target <= t) continue;
    while (t < target) {
      const double remaining = target - t;
      double hs = std::min({h, opt.max_step, remaining});
      const bool last = hs >= remaining * (1.0 - 1e-12);
      if (last) hs = remaining;
      full = y;
      st.step(full, t, hs);
      mid = y;
      st.step(mid, t, 0.5 * hs);
      half = mid;
      st.step(half, t + 0.5 * hs, 0.5 * hs);
      const double t_new = last ? target : t + hs;
      const auto next = st.observe(half, pr.u(t_new));
      const auto centre = st.observe(mid, pr.u(t + 0.5 * hs));
      // Hermite-Simpson on values and slopes at both ends and the midpoint,
      // exact for quintics in t; its gap to plain Simpson bounds the
      // quadrature error, which an exact exponential step does not see.
      const double simpson = hs * (obs.I_op + 4.0 * centre.I_op + next.I_op) / 6.0;
      const double dq = hs * (7.0 * (obs.I_op + next.I_op) + 16.0 * centre.I_op) / 30.0 +
                        hs * hs * (obs.dI_op - next.dI_op) / 60.0;
      const double err = std::max((full - half).norm(), std::abs(dq - simpson));
      if (err > opt.tolerance) {
        ++rec.rejected_steps;
        h = hs * std::max(0.2, 0.9 * std::pow(opt.tolerance / err, 0.2));
        if (h < 1e-14 * std::max(1.0, pr.duration))
          throw PropagationError("step size underflow at t = " + std::to_string(t));
        continue;
      }
      y = half;
      charge += dq;
      obs = next;
      t = t_new;
      ++rec.steps;
      const double drift = std::abs(y.squaredNorm() - 1.0);
      rec.max_norm_drift = std::max(rec.max_norm_drift, drift);
      if (drift > opt.norm_abort)
        throw PropagationError("norm drift " + std::to_string(drift) + " at t = " + std::to_string(t));
      const double grow = err > 0.0 ? std::min(4.0, 0.9 * std::pow(opt.tolerance / err, 0.2)) : 4.0;
      const double proposal = hs * grow;
      h = last ? std::max(h, proposal) : proposal;
    }
    store(t, obs);
  }
  rec.final_state = WaveState{t, std::move(y), basis};
  return rec;
}

inline Backend choose_backend(const PropagationOptions& opt, Index n, bool have_model) {
  if (opt.backend != Backend::automatic) return opt.backend;
  return (have_model && n <= opt.dense_limit) ? Backend::site_dense : Backend::level;
}

}  // namespace detail

// Propagate from `initial` under the protocol; the state may be given in
// either basis. The site backend needs the model; the level backend works
// from the decomposition alone.
inline CurrentRecord propagate(const NetworkModel& model, const SpectralDecomposition& d,
                               const SweepProtocol& protocol, const WaveState& initial,
                               const PropagationOptions& opt = {}) {
  if (initial.amplitudes.size() != model.size() + 1) throw Error("initial state has the wrong dimension");
  const Backend b = detail::choose_backend(opt, model.size(), true);
  if (b == Backend::site_dense) {
    detail::SiteStepper st(model, d, protocol);
    return detail::drive(st, d, protocol, to_site_basis(d, initial).amplitudes, Basis::site, opt);
  }
  detail::LevelStepper st(d, protocol);
  return detail::drive(st, d, protocol, to_level_basis(d, initial).amplitudes, Basis::level, opt);
}

inline CurrentRecord propagate(const NetworkModel& model, const SweepProtocol& protocol,
                               const WaveState& initial, const PropagationOptions& opt = {}) {
  const auto d = decompose(model);
  return propagate(model, d, protocol, initial, opt);
}

inline CurrentRecord propagate(const SpectralDecomposition& d, const SweepProtocol& protocol,
                               const WaveState& initial, const PropagationOptions& opt = {}) {
  if (initial.amplitudes.size() != d.size() + 1) throw Error("initial state has the wrong dimension");
  if (opt.backend == Backend::site_dense) throw Error("site backend needs the network model");
  detail::LevelStepper st(d, protocol);
  return detail::drive(st, d, protocol, to_level_basis(d, initial).amplitudes, Basis::level, opt);
}

struct ChargeResult {
  double time_integral = 0.0;  // integral of I_operator over the run
  double endpoint = 0.0;       // sum_n lambda_n [q_n(final) - q_n(initial)]
};

inline ChargeResult integrated_charge(const CurrentRecord& rec) {
  const Index n = rec.samples();
  if (n == 0) throw Error("empty record");
  return {rec.Q_cumulative(n - 1) - rec.Q_cumulative(0),
          rec.weighted_occupation(n - 1) - rec.weighted_occupation(0)};
}

// Non-interacting particles: occupations and currents add.
inline CurrentRecord many_body_current(const std::vector<CurrentRecord>& records) {
  if (records.empty()) throw Error("no records to combine");
  CurrentRecord total = records.front();
  total.tag = records.front().tag;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& x = records[r];
    if (x.times.size() != total.times.size() || x.times != total.times || x.q.cols() != total.q.cols())
      throw Error("records have mismatched grids");
    total.p += x.p;
    total.q += x.q;
    total.I_operator += x.I_operator;
    total.I_splitting += x.I_splitting;
    total.Q_cumulative += x.Q_cumulative;
    total.max_norm_drift = std::max(total.max_norm_drift, x.max_norm_drift);
    total.steps += x.steps;
    total.rejected_steps += x.rejected_steps;
  }
  total.max_identity_residual = (total.I_operator - total.I_splitting).cwiseAbs().maxCoeff();
  return total;
}

// ---------------------------------------------------------------------------
// Moving-level decay into a flat quasi-continuum.

// q_n(t) = |c_n int_0^t exp(i eps tau - i (u_dot/2) tau^2 - (Gamma/2) tau) dtau|^2.
// eps is measured from the dot energy at tau = 0.
inline double wigner_decay_qn(double eps, double c, double gamma, double u_dot, double t,
                              double tolerance = 1e-8) {
  if (gamma < 0.0) throw Error("decay rate must be non-negative");
  if (t < 0.0) throw Error("time must be non-negative");
  if (t == 0.0) return 0.0;
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  // Each panel holds at most about half an oscillation and one e-fold of decay.
  const double phase_span = std::abs(eps) * t + 0.5 * std::abs(u_dot) * t * t;
  const double span = std::max(phase_span / kPi, 0.5 * gamma * t);
  const Index panels = std::min<Index>(200000, static_cast<Index>(std::ceil(span)) + 1);
  const double w = t / static_cast<double>(panels);
  double re = 0.0, im = 0.0, err = 0.0;
  for (Index k = 0; k < panels; ++k) {
    const double a = k * w, b = (k + 1) * w;
    double e1 = 0.0, e2 = 0.0;
    re += GK::integrate([&](double x) {
      return std::exp(-0.5 * gamma * x) * std::cos(eps * x - 0.5 * u_dot * x * x);
    }, a, b, 4, 1e-12, &e1);
    im += GK::integrate([&](double x) {
      return std::exp(-0.5 * gamma * x) * std::sin(eps * x - 0.5 * u_dot * x * x);
    }, a, b, 4, 1e-12, &e2);
    // Boost reports the error on the panel mapped to [-1, 1].
    err += (e1 + e2) * 0.5 * w;
  }
  const double amp = std::hypot(re, im);
  if (!(err <= tolerance * std::max(amp, 1e-3 * t)))
    throw QuadratureError("decay integral did not converge", err);
  return c * c * (re * re + im * im);
}

inline Vec wigner_decay_profile(const Vec& eps, const Vec& c, double gamma, double u_dot, double t,
                                double tolerance = 1e-8) {
  if (eps.size() != c.size()) throw Error("levels and couplings must have equal length");
  Vec q(eps.size());
  for (Index n = 0; n < eps.size(); ++n) q(n) = wigner_decay_qn(eps(n), c(n), gamma, u_dot, t, tolerance);
  return q;
}

enum class Regime { adiabatic, slow, fast };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::adiabatic: return "adiabatic";
    case Regime::slow: return "slow";
    case Regime::fast: return "fast";
  }
  return "unknown";
}

struct RegimeResult {
  Regime regime = Regime::adiabatic;
  bool boundary = false;
  double gamma = 0.0;  // 2 pi c^2 / Delta
};

// Adiabatic below c^2, slow up to Gamma^2, fast above; within 1% of either
// threshold the result is flagged as boundary.
inline RegimeResult classify_regime(double c, double delta, double u_dot) {
  if (!(c > 0.0) || !(delta > 0.0)) throw Error("regime needs c > 0 and Delta > 0");
  if (u_dot < 0.0) throw Error("regime needs a non-negative rate");
  RegimeResult r;
  r.gamma = 2.0 * kPi * c * c / delta;
  const double lo = c * c, hi = r.gamma * r.gamma;
  r.regime = u_dot < lo ? Regime::adiabatic : (u_dot < hi ? Regime::slow : Regime::fast);
  r.boundary = std::abs(u_dot - lo) <= 0.01 * lo || std::abs(u_dot - hi) <= 0.01 * hi;
  return r;
}

}  // namespace sweepnet
