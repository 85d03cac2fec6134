#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "sweepnet/adiabatic.hpp"

using namespace sweepnet;

namespace {

template <class F>
double integrate(F f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-12);
}

// Dense eigenvector of the full Hamiltonian on branch b (all levels coupled).
Vec dense_eigenvector(const NetworkModel& m, double u, Index b, double* energy = nullptr) {
  Eigen::SelfAdjointEigenSolver<CMat> eig(assemble(m, u, 0.0).matrix);
  if (energy) *energy = eig.eigenvalues()(b);
  return eig.eigenvectors().col(b).cwiseAbs();
}

// Level-basis magnitudes of a dense eigenvector: |psi_0|, |<e_n|Psi>|.
Vec level_magnitudes(const NetworkModel& m, const SpectralDecomposition& d, double u, Index b) {
  Eigen::SelfAdjointEigenSolver<CMat> eig(assemble(m, u, 0.0).matrix);
  const CVec v = eig.eigenvectors().col(b);
  Vec out(m.size() + 1);
  out(0) = std::abs(v(0));
  const CVec lv = d.vectors.transpose().cast<Complex>() * v.tail(m.size());
  out.tail(m.size()) = lv.cwiseAbs();
  return out;
}

SpectralDecomposition five_level_star(NetworkModel* model = nullptr) {
  Vec e(5), c(5);
  e << -2.0, -0.7, 0.1, 0.9, 2.4;
  c << 0.5, 0.8, -0.6, 0.4, 0.7;
  auto m = build_star(e, c, 2);
  if (model) *model = m;
  return decompose(m);
}

}  // namespace

TEST(LevelFunction, SingleTerm) {
  const auto d = decompose(build_star(Vec::Zero(1), Vec::Constant(1, 2.0)));
  EXPECT_DOUBLE_EQ(g_of_E(d, 1.0), 4.0);
  EXPECT_THROW(g_of_E(d, 0.0), PoleError);
  EXPECT_THROW(g_prime(d, 0.0), PoleError);
}

TEST(LevelFunction, DecreasingBetweenPolesAndOdd) {
  Vec e(4), c(4);
  e << -1.5, -0.5, 0.5, 1.5;
  c << 0.3, 0.7, 0.7, 0.3;
  const auto d = decompose(build_star(e, c));
  for (double x = -0.49; x < 0.49; x += 0.01) {
    EXPECT_GT(g_of_E(d, x), g_of_E(d, x + 0.005));
    EXPECT_LT(g_prime(d, x), 0.0);
    EXPECT_NEAR(g_of_E(d, -x), -g_of_E(d, x), 1e-12);
  }
}

TEST(LevelFunction, CombClosedFormMatchesTruncatedSum) {
  const auto p = ContinuumParams::from_couplings(0.9, 0.4, 1.3);
  // Symmetric truncated comb: c_minus on even multiples, c_plus on odd.
  auto truncated = [&](long mmax, double e) {
    double s = 0.0;
    for (long j = -mmax; j <= mmax; ++j) {
      const double c = (j % 2 == 0) ? p.c_minus : p.c_plus;
      s += c * c / (e - static_cast<double>(j) * p.Delta);
    }
    return s;
  };
  for (double e : {0.17, 0.5, 0.9, 1.7, -2.2, 3.7}) {
    // Symmetric pair tails fall as 1/M; one Richardson step removes it.
    const double s1 = truncated(20000, e), s2 = truncated(40000, e);
    const double extrap = 2.0 * s2 - s1;
    EXPECT_NEAR(comb_g(p, e), extrap, 1e-6 * std::abs(extrap)) << "E=" << e;
  }
  EXPECT_THROW(comb_g(p, 0.0), PoleError);
}

TEST(SecularRoots, TwoLevelAvoidedCrossing) {
  const double c = 0.8;
  const auto d = decompose(build_star(Vec::Zero(1), Vec::Constant(1, c)));
  for (double u : {-4.0, -0.3, 0.0, 2.5}) {
    const Vec r = secular_roots(d, u);
    ASSERT_EQ(r.size(), 2);
    EXPECT_NEAR(r(0), 0.5 * (u - std::sqrt(u * u + 4 * c * c)), 1e-13);
    EXPECT_NEAR(r(1), 0.5 * (u + std::sqrt(u * u + 4 * c * c)), 1e-13);
  }
}

TEST(SecularRoots, ResidualAndDenseAgreement) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto m = build_random_network(9, seed);
    const auto d = decompose(m);
    StarView view(d);
    for (double u : {-3.0, -0.4, 0.0, 0.8, 5.0}) {
      const Vec r = secular_roots(d, u);
      ASSERT_EQ(r.size(), 10);
      Eigen::SelfAdjointEigenSolver<CMat> eig(assemble(m, u, 0.0).matrix, Eigen::EigenvaluesOnly);
      const auto roots = secular::solve_all(u, view.poles(), view.weights());
      for (Index j = 0; j < r.size(); ++j) {
        // Residual through the pole-relative representation; the absolute
        // double E alone cannot resolve E - e_n for a root hugging a pole.
        double g = 0.0;
        for (Index n = 0; n < view.coupled_count(); ++n)
          g += view.weights()[n] / roots[j].minus_pole(view.poles(), n);
        EXPECT_LT(std::abs(g - (r(j) - u)), 1e-10 * std::max(1.0, std::abs(u)));
        EXPECT_NEAR(r(j), eig.eigenvalues()(j), 1e-8);
      }
    }
  }
}

TEST(SecularRoots, DetachedDotLevel) {
  const auto d = five_level_star();
  const double u = -1e6;
  EXPECT_NEAR(secular_roots(d, u)(0), u, 1e-5);
}

TEST(SecularRoots, CombCotQuadraticMatchesBisection) {
  const auto p = ContinuumParams::from_ring(6.0, 4.0, 1.0);
  for (double u : {-7.3, 0.0, 0.4, 12.9}) {
    for (long m = -6; m <= 6; ++m) {
      const double root = comb_secular_root(p, u, m);
      // Bisection on comb_g(E) - E + u, decreasing on the open interval.
      double lo = m * p.Delta, hi = lo + p.Delta;
      for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (comb_g(p, mid) - mid + u > 0.0) lo = mid; else hi = mid;
      }
      EXPECT_NEAR(root, 0.5 * (lo + hi), 1e-10) << "u=" << u << " m=" << m;
    }
  }
}

TEST(BranchOccupations, SymmetricTwoLevelPoint) {
  const auto d = decompose(build_star(Vec::Zero(1), Vec::Constant(1, 1.3)));
  for (Index b : {0, 1}) {
    const auto s = branch_occupations(d, 0.0, b);
    EXPECT_NEAR(s.p, 0.5, 1e-15);
    EXPECT_NEAR(s.q(0), 0.5, 1e-15);
  }
}

TEST(BranchOccupations, NormalisedAndMatchDenseEigenvectors) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const auto m = build_random_network(7, seed);
    const auto d = decompose(m);
    for (double u : {-2.0, 0.1, 1.7}) {
      for (Index b = 0; b <= 7; ++b) {
        const auto s = branch_occupations(d, u, b);
        EXPECT_NEAR(s.p + s.q.sum(), 1.0, 1e-10);
        const Vec mag = level_magnitudes(m, d, u, b);
        EXPECT_NEAR(std::sqrt(s.p), mag(0), 1e-8);
        for (Index n = 0; n < 7; ++n) EXPECT_NEAR(std::sqrt(s.q(n)), mag(n + 1), 1e-8);
      }
    }
  }
}

TEST(BranchOccupations, LargeCombGroundBranchMatchesDense) {
  const Index n = 500;
  Vec e(n);
  for (Index j = 0; j < n; ++j) e(j) = static_cast<double>(j);
  const auto m = build_star(e, Vec::Constant(n, 3.0));
  const auto d = decompose(m);
  const auto s = branch_occupations(d, 60.0, 0);
  const Vec dense = dense_eigenvector(m, 60.0, 0);
  EXPECT_NEAR(std::sqrt(s.p), dense(0), 1e-8);
  for (Index j = 0; j < n; ++j) EXPECT_NEAR(std::sqrt(s.q(j)), dense(j + 1), 1e-8);
}

TEST(BranchOccupations, DetachmentOnGroundBranch) {
  const auto d = five_level_star();
  const auto s = branch_occupations(d, 1e5, 0);
  EXPECT_GT(s.q(0), 1.0 - 1e-9);
  EXPECT_LT(s.p, 1e-9);
}

TEST(AdiabaticBranch, MonotoneAndBracketed) {
  const auto d = five_level_star();
  Vec grid = Vec::LinSpaced(200, -20.0, 20.0);
  for (Index b = 0; b <= 5; ++b) {
    const auto br = trace_branch(d, b, grid);
    ASSERT_EQ(br.samples.size(), 200u);
    for (std::size_t i = 0; i < br.samples.size(); ++i) {
      const auto& s = br.samples[i];
      EXPECT_GT(s.energy, br.bracket_low);
      EXPECT_LT(s.energy, br.bracket_high);
      EXPECT_NEAR(s.p + s.q.sum(), 1.0, 1e-10);
      if (i > 0) {
        EXPECT_GT(s.energy, br.samples[i - 1].energy);
      }
    }
  }
}

TEST(BerryKubo, StarEqualsDerivativeOfTaggedOccupation) {
  NetworkModel m;
  const auto d = five_level_star(&m);
  const Index a = m.tagged_site;
  for (double u = -3.0; u <= 3.0; u += 0.25) {
    for (Index b = 0; b <= 5; ++b) {
      const double h = 1e-4;
      // Five-point stencil on the analytic occupations.
      auto q = [&](double x) { return branch_occupations(d, x, b).q(a); };
      const double dq = (-q(u + 2 * h) + 8 * q(u + h) - 8 * q(u - h) + q(u - 2 * h)) / (12 * h);
      EXPECT_NEAR(berry_kubo_G(m, u, b).G, dq, 1e-6) << "u=" << u << " b=" << b;
    }
  }
}

TEST(BerryKubo, TwoSiteSweepTransfersUnitCharge) {
  const double c = 0.5;
  const auto m = build_star(Vec::Zero(1), Vec::Constant(1, c));
  // Charge beyond |u| = U is 1 - U/sqrt(U^2+4c^2); add it analytically.
  const double big = 50.0;
  const double core = integrate([&](double u) { return berry_kubo_G(m, u, 0).G; }, -big, big);
  const double tail = 1.0 - big / std::sqrt(big * big + 4 * c * c);
  EXPECT_NEAR(core + tail, 1.0, 1e-6);
}

TEST(BerryKubo, ThreeSiteRingEqualsSplittingForm) {
  const auto m = build_dot_wire_ring(2, 1.0, 6.0, 4.0);
  const auto d = decompose(m);
  for (double u = -10.0; u <= 10.0; u += 0.5)
    for (Index b = 0; b < 3; ++b) EXPECT_NEAR(berry_kubo_G(m, u, b).G, splitting_G(d, b, u), 1e-6);
}

TEST(BerryKubo, RandomNetworksEqualSplittingForm) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto m = build_random_network(6, seed);
    const auto d = decompose(m);
    for (double u : {-1.5, -0.2, 0.6, 2.0})
      for (Index b = 0; b <= 6; ++b) {
        const auto bk = berry_kubo_G(m, u, b);
        if (bk.near_degenerate) continue;
        EXPECT_NEAR(bk.G, splitting_G(d, b, u), 1e-6) << "seed " << seed << " b " << b;
      }
  }
}

TEST(BerryKubo, FlagsNearDegeneracy) {
  // A level that barely couples leaves a tiny avoided crossing at u = 0.
  Vec e(2), c(2);
  e << 0.0, 1.0;
  c << 1e-5, 1.0;
  const auto m = build_star(e, c, 1);
  BerryKuboOptions opt;
  opt.gap_threshold = 1e-3;
  const double u = 0.0 - 1.0 / (0.0 - 1.0);  // E = 0 solves g(E) = E - u without the tiny term
  EXPECT_TRUE(berry_kubo_G(m, u, 1, opt).near_degenerate);
  EXPECT_FALSE(berry_kubo_G(m, -20.0, 1, opt).near_degenerate);
}

TEST(SplittingG, StarReducesToTaggedDerivative) {
  const auto d = five_level_star();
  for (double u : {-1.0, 0.3, 1.2}) {
    for (Index b = 0; b <= 5; ++b) {
      const double h = 1e-5;
      const double dq = (branch_occupations(d, u + h, b).q(2) - branch_occupations(d, u - h, b).q(2)) / (2 * h);
      EXPECT_NEAR(splitting_G(d, b, u), dq, 1e-7);
    }
  }
}

TEST(SplittingG, RingInductionBranchCarriesRatioDifference) {
  const auto d = decompose(build_dot_wire_ring(2, 1.0, 6.0, 4.0));
  // Branch 1 moves from level 0 (u -> -inf) to level 1 (u -> +inf).
  const double big = 2e3;
  const double q = integrate([&](double u) { return splitting_G(d, 1, u); }, -big, big);
  EXPECT_NEAR(q, d.ratios(1) - d.ratios(0), 1e-3);
  EXPECT_NEAR(std::abs(d.ratios(1) - d.ratios(0)), 2.0 * 6 * 4 / (36.0 - 16.0), 1e-12);
}

TEST(ContinuumParams, DefinitionsAndFigureValues) {
  const auto p = ContinuumParams::from_ring(6.0, 4.0, 1.0);
  EXPECT_NEAR(p.c_plus, 10.0 / std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(p.c_minus, 2.0 / std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(p.C_eff, 0.5 * kPi * p.c_plus * p.c_minus / p.Delta, 1e-12);
  EXPECT_NEAR(p.C_eff, 5.0 * kPi, 1e-12);
  EXPECT_NEAR(p.Gamma, kPi * 52.0, 1e-12);
  EXPECT_NEAR(std::sin(p.theta), 48.0 / 52.0, 1e-12);
}

TEST(DistortedLorentzian, SymmetricCaseIsPlainLorentzian) {
  const double g = 2.3;
  for (double x : {-3.0, -0.4, 0.0, 1.1, 7.0})
    EXPECT_NEAR(distorted_lorentzian(x, g, 0.0), (1 / kPi) * (g / 2) / (x * x + g * g / 4), 1e-15);
}

TEST(DistortedLorentzian, CentreValueAndNormalisation) {
  const double g = 1.7;
  for (double th : {-1.2, -0.3, 0.5, 1.4}) {
    const double c = std::cos(th);
    const double direct = (1 / kPi) * (c * c * g / 2) / (c * c * g * g / 4);
    EXPECT_NEAR(distorted_lorentzian(0.0, g, th), direct, 1e-14);
    const double total = integrate([&](double x) { return distorted_lorentzian(x, g, th); },
                                   -std::numeric_limits<double>::infinity(),
                                   std::numeric_limits<double>::infinity());
    EXPECT_NEAR(total, 1.0, 1e-6) << "theta=" << th;
    EXPECT_GT(distorted_lorentzian(0.3, g, th), 0.0);
  }
  EXPECT_THROW(distorted_lorentzian(0.1, 1.0, 0.5 * kPi), Error);
}

TEST(DistortedLorentzian, ApproximatesDotOccupationInRingComb) {
  const auto p = ContinuumParams::from_ring(6.0, 4.0, 1.0);
  const Index n = 1201;  // window +- 600, beyond 3 Gamma
  const auto d = ring_comb_spectrum(n, 1.0, 6.0, 4.0);
  StarView view(d);
  const Index n0 = n / 2;
  ASSERT_NEAR(d.ratios(n0), 0.6, 1e-12);
  const double e = d.levels(n0);
  for (double x = -3 * p.Gamma; x <= 3 * p.Gamma; x += 0.37) {
    const auto s = branch_occupations(view, e + x, n0 + 1);
    EXPECT_NEAR(s.p / (p.Delta * distorted_lorentzian(x, p.Gamma, p.theta)), 1.0, 0.05) << "x=" << x;
  }
}

TEST(CollectivePeak, CentreIntegralAndFigureValue) {
  const auto p = ContinuumParams::from_ring(6.0, 4.0, 1.0);
  const double lm = 3.0, lp = 0.6;
  EXPECT_NEAR(collective_peak_G(p, lm, lp, 2.0, 2.0), (lm - lp) / (4 * p.C_eff), 1e-15);
  EXPECT_NEAR(collective_peak_G(p, lm, lp, 0.0, 0.0), 2.4 / (20 * kPi), 1e-15);
  const double total = integrate([&](double u) { return collective_peak_G(p, lm, lp, u, 0.5); },
                                 -std::numeric_limits<double>::infinity(),
                                 std::numeric_limits<double>::infinity());
  EXPECT_NEAR(total, lm - lp, 1e-9);
}
