#pragma once

// Eigenproblem of a real symmetric arrowhead matrix
//
//     [ alpha  z^T ]
//     [ z      D   ],   D = diag(d_0 < d_1 < ... < d_{K-1}),  all z_n != 0,
//
// whose K+1 eigenvalues are the roots of f(E) = E - alpha - sum_n z_n^2/(E - d_n).
// Exactly one root lies in each gap between consecutive poles, plus one below
// and one above. Roots are stored as an offset from their nearest pole so that
// E - d_n stays accurate even when a root hugs a pole.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "sweepnet/types.hpp"

namespace sweepnet::secular {

struct Root {
  double value = 0.0;
  Index anchor = -1;  // nearest pole, -1 when there are no poles
  double offset = 0.0;

  // value - poles[n], computed through the anchor.
  double minus_pole(std::span<const double> poles, Index n) const {
    return (poles[anchor] - poles[n]) + offset;
  }
};

namespace detail {

struct Anchored {
  double f_tail;   // F(delta) = d_k + delta - alpha - sum_{n != k} w_n / (d_k - d_n + delta)
  double df_tail;  // F'(delta)
};

inline Anchored eval_anchored(double alpha, std::span<const double> poles,
                              std::span<const double> weights, Index k, double delta) {
  double s = 0.0, ds = 0.0;
  const double dk = poles[k];
  const Index count = static_cast<Index>(poles.size());
  for (Index n = 0; n < count; ++n) {
    if (n == k) continue;
    const double r = 1.0 / ((dk - poles[n]) + delta);
    const double t = weights[n] * r;
    s += t;
    ds += t * r;
  }
  return {dk + delta - alpha - s, 1.0 + ds};
}

// Safeguarded Newton on h(delta) = delta F(delta) - w_k inside (a, b).
inline double newton(double alpha, std::span<const double> poles, std::span<const double> weights,
                     Index k, double wk, double delta, double a, double b) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (int it = 0; it < 200; ++it) {
    const auto ev = eval_anchored(alpha, poles, weights, k, delta);
    const double h = delta * ev.f_tail - wk;
    const double dh = ev.f_tail + delta * ev.df_tail;
    const double f_sign = (delta > 0.0) ? h : -h;  // sign of f(delta)
    if (f_sign == 0.0) break;
    if (f_sign < 0.0)
      a = delta;
    else
      b = delta;
    double next = delta - h / dh;
    if (!(next > a && next < b) || !std::isfinite(next)) next = 0.5 * (a + b);
    const double step = std::abs(next - delta);
    const bool newton_step = next == delta - h / dh;
    delta = next;
    // Quadratic convergence: a Newton step below 1e-9 leaves round-off.
    if ((newton_step && step <= 1e-9 * std::abs(delta)) || step <= 4.0 * eps * std::abs(delta) || (b - a) <= 4.0 * eps * std::max(std::abs(a), std::abs(b)))
      break;
  }
  return delta;
}

}  // namespace detail

inline double total_weight(std::span<const double> weights) {
  double w = 0.0;
  for (double x : weights) w += x;
  return w;
}

// Root number j (0-based, ascending). `guess` is an absolute energy.
inline Root solve_root(double alpha, std::span<const double> poles, std::span<const double> weights,
                       Index j, std::optional<double> guess = std::nullopt) {
  const Index count = static_cast<Index>(poles.size());
  if (count == 0) return {alpha, -1, alpha};
  if (j < 0 || j > count) throw Error("secular root index out of range");

  Index k;
  double a, b;  // bracket in delta; f(a) < 0 < f(b)
  if (j == 0) {
    const double spread = std::sqrt(total_weight(weights)) + 1.0;
    k = 0;
    a = std::min(alpha, poles[0]) - spread - poles[0];
    b = 0.0;
  } else if (j == count) {
    const double spread = std::sqrt(total_weight(weights)) + 1.0;
    k = count - 1;
    a = 0.0;
    b = std::max(alpha, poles[count - 1]) + spread - poles[count - 1];
  } else {
    const double gap = poles[j] - poles[j - 1];
    const double mid = 0.5 * gap;
    bool lower;
    if (guess && *guess > poles[j - 1] && *guess < poles[j]) {
      // Anchor on the pole nearer the guess; re-anchored below if the root
      // ends up in the far half.
      lower = *guess - poles[j - 1] < poles[j] - *guess;
      a = lower ? 0.0 : -gap;
      b = lower ? gap : 0.0;
    } else {
      const auto ev = detail::eval_anchored(alpha, poles, weights, j - 1, mid);
      lower = ev.f_tail - weights[j - 1] / mid > 0.0;
      a = lower ? 0.0 : -mid;
      b = lower ? mid : 0.0;
    }
    k = lower ? j - 1 : j;
  }
  const double wk = weights[k];

  double delta;
  if (guess && *guess - poles[k] > a && *guess - poles[k] < b && *guess != poles[k]) {
    delta = *guess - poles[k];
  } else {
    // One-pole model around the anchor: delta (F0 + delta) = w_k.
    const auto ev = detail::eval_anchored(alpha, poles, weights, k, 0.0);
    const double p = ev.f_tail;
    const double disc = std::sqrt(p * p + 4.0 * wk);
    delta = (b > 0.0 && a >= 0.0) ? 0.5 * (-p + disc) : 0.5 * (-p - disc);
    if (!(delta > a && delta < b)) delta = (a == 0.0) ? 0.5 * b : (b == 0.0 ? 0.5 * a : 0.5 * (a + b));
  }

  delta = detail::newton(alpha, poles, weights, k, wk, delta, a, b);
  if (j > 0 && j < count) {
    const double gap = poles[j] - poles[j - 1];
    if (k == j - 1 && delta > 0.5 * gap) {
      k = j;
      delta = detail::newton(alpha, poles, weights, k, weights[k], delta - gap, -gap, 0.0);
    } else if (k == j && delta < -0.5 * gap) {
      k = j - 1;
      delta = detail::newton(alpha, poles, weights, k, weights[k], delta + gap, 0.0, gap);
    }
  }
  return {poles[k] + delta, k, delta};
}

// All K+1 roots in ascending order; `guesses` (if non-empty) are previous
// root values used as warm starts.
inline std::vector<Root> solve_all(double alpha, std::span<const double> poles,
                                   std::span<const double> weights,
                                   std::span<const double> guesses = {}) {
  const Index count = static_cast<Index>(poles.size());
  std::vector<Root> roots(static_cast<std::size_t>(count + 1));
  for (Index j = 0; j <= count; ++j) {
    std::optional<double> g;
    if (static_cast<Index>(guesses.size()) == count + 1) g = guesses[j];
    roots[j] = solve_root(alpha, poles, weights, j, g);
  }
  return roots;
}

// Eigenvectors of the arrowhead from its computed roots. The couplings are
// replaced by the values that make the roots exact (the Gu-Eisenstat
// construction), which keeps the eigenvector set orthogonal to working
// precision. Column j of the eigenvector matrix is
//     (1, zhat_n / (E_j - d_n)) / norm_j.
class ArrowheadBasis {
 public:
  ArrowheadBasis() = default;

  // `inv_gaps`, if given, holds 1 / (d_m - d_n) at (m, n) (diagonal unused).
  ArrowheadBasis(std::span<const double> poles, std::span<const double> couplings,
                 std::vector<Root> roots, const Mat* inv_gaps = nullptr)
      : roots_(std::move(roots)) {
    const Index k = static_cast<Index>(poles.size());
    const Index m = k + 1;
    Eigen::ArrayXd base(m), off(m);
    for (Index j = 0; j < m; ++j) {
      base(j) = k ? poles[roots_[j].anchor] : 0.0;
      off(j) = roots_[j].offset;
    }
    // diff(j, n) = E_j - d_n through the anchors; overwritten by its inverse.
    inv_diff_.resize(m, k);
    zhat_.resize(k);
    Vec gap_col(k);
    for (Index n = 0; n < k; ++n) {
      auto col = inv_diff_.col(n).array();
      col = (base - poles[n]) + off;
      const double* gap = nullptr;
      if (inv_gaps) {
        gap = inv_gaps->col(n).data();
      } else {
        for (Index mm = 0; mm < k; ++mm) gap_col(mm) = mm == n ? 0.0 : 1.0 / (poles[mm] - poles[n]);
        gap = gap_col.data();
      }
      // Pair each pole gap with one root so partial products stay O(1).
      const double* dcol = inv_diff_.col(n).data();
      double p0 = dcol[0] * dcol[k], p1 = 1.0;
      Index mm = 0;
      for (; mm + 1 < n; mm += 2) {
        p0 *= dcol[mm + 1] * gap[mm];
        p1 *= dcol[mm + 2] * gap[mm + 1];
      }
      for (; mm < n; ++mm) p0 *= dcol[mm + 1] * gap[mm];
      mm = n + 1;
      for (; mm + 1 < k; mm += 2) {
        p0 *= dcol[mm] * gap[mm];
        p1 *= dcol[mm + 1] * gap[mm + 1];
      }
      for (; mm < k; ++mm) p0 *= dcol[mm] * gap[mm];
      const double z2 = std::max(-(p0 * p1), 0.0);
      zhat_(n) = std::copysign(std::sqrt(z2), couplings[n]);
      col = col.inverse();
    }
    const Vec z2 = zhat_.array().square().matrix();
    inv_norm_ = (Vec::Ones(m) + inv_diff_.array().square().matrix() * z2).cwiseSqrt().cwiseInverse();
  }

  Index dimension() const { return static_cast<Index>(roots_.size()); }
  const std::vector<Root>& roots() const { return roots_; }
  double energy(Index j) const { return roots_[j].value; }

  // Component n+1 (level n) and component 0 (dot) of eigenvector j.
  double dot_component(Index j) const { return inv_norm_(j); }
  double level_component(Index j, Index n) const { return zhat_(n) * inv_diff_(j, n) * inv_norm_(j); }

  // y <- V diag(exp(-i t E_j)) V^T y, y = (dot, levels...).
  void evolve(Eigen::Ref<CVec> y, double t) const {
    const Index m = dimension();
    const Index k = m - 1;
    CVec zy(k);
    for (Index n = 0; n < k; ++n) zy(n) = zhat_(n) * y(n + 1);
    // Projections onto eigenvectors (real matrix times complex vector).
    CVec x = (inv_diff_ * zy.real()).cast<Complex>() + Complex(0.0, 1.0) * (inv_diff_ * zy.imag()).cast<Complex>();
    for (Index j = 0; j < m; ++j) {
      x(j) = (x(j) + y(0)) * inv_norm_(j);
      x(j) *= std::polar(inv_norm_(j), -t * roots_[j].value);
    }
    y(0) = x.sum();
    Vec xr = x.real(), xi = x.imag();
    Vec br = inv_diff_.transpose() * xr;
    Vec bi = inv_diff_.transpose() * xi;
    for (Index n = 0; n < k; ++n) y(n + 1) = zhat_(n) * Complex(br(n), bi(n));
  }

 private:
  std::vector<Root> roots_;
  Mat inv_diff_;  // (K+1) x K, 1 / (E_j - d_n)
  Vec zhat_;
  Vec inv_norm_;
};

}  // namespace sweepnet::secular
