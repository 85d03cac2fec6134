#include <cmath>

#include <gtest/gtest.h>

#include "sweepnet/network.hpp"

using namespace sweepnet;

namespace {

void expect_decomposition_invariants(const NetworkModel& m, const SpectralDecomposition& d) {
  const Index n = m.size();
  EXPECT_LT((d.vectors.transpose() * d.vectors - Mat::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-12);
  for (Index k = 1; k < n; ++k) EXPECT_GE(d.levels(k), d.levels(k - 1));
  const Vec c = d.vectors.transpose() * m.dot_couplings;
  for (Index k = 0; k < n; ++k) {
    EXPECT_NEAR(d.couplings(k), c(k), 1e-12);
    if (d.is_coupled(k)) {
      EXPECT_NEAR(d.ratios(k) * d.couplings(k), d.vectors(m.tagged_site, k) * m.tagged_coupling(), 1e-12);
    }
  }
}

}  // namespace

TEST(NetworkModel, RejectsAsymmetricCouplings) {
  Mat c = Mat::Zero(2, 2);
  c(0, 1) = 1.0;
  c(1, 0) = 1.0 + 1e-15;
  EXPECT_THROW(make_network(Vec::Zero(2), c, Vec::Ones(2), 0), InvalidModel);
}

TEST(NetworkModel, RejectsUncoupledTaggedSite) {
  Vec dot(2);
  dot << 0.0, 1.0;
  EXPECT_THROW(make_network(Vec::Zero(2), Mat::Zero(2, 2), dot, 0), InvalidModel);
}

TEST(Star, DecompositionReturnsInputs) {
  Vec e(4), c(4);
  e << -1.5, -0.2, 0.7, 2.0;
  c << 0.3, -1.1, 0.5, 0.9;
  const auto m = build_star(e, c, 1);
  const auto d = decompose(m);
  expect_decomposition_invariants(m, d);
  for (Index n = 0; n < 4; ++n) {
    EXPECT_NEAR(d.levels(n), e(n), 1e-14);
    EXPECT_NEAR(std::abs(d.couplings(n)), std::abs(c(n)), 1e-14);
    EXPECT_NEAR(d.ratios(n), n == 1 ? 1.0 : 0.0, 1e-14);
  }
}

TEST(Star, AllZeroCouplingsRejected) {
  EXPECT_THROW(build_star(Vec::Zero(3), Vec::Zero(3)), InvalidModel);
}

TEST(Star, SingleLevelIsTwoSiteModel) {
  const auto m = build_star(Vec::Zero(1), Vec::Constant(1, 0.8));
  const auto h = assemble(m, 0.0, 0.0);
  CMat want(2, 2);
  want << 0.0, 0.8, 0.8, 0.0;
  EXPECT_LT((h.matrix - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(DotWireRing, WireSpectrumMatchesCosineBand) {
  const Index n = 9;
  const auto m = build_dot_wire_ring(n, 1.0, 0.7, 0.4);
  const auto d = decompose(m);
  expect_decomposition_invariants(m, d);
  for (Index j = 0; j < n; ++j) {
    // Ascending order: k = pi (j+1) / (N+1), energy -2 C0 cos k.
    const double k = kPi * static_cast<double>(j + 1) / static_cast<double>(n + 1);
    EXPECT_NEAR(d.levels(j), -2.0 * std::cos(k), 1e-12);
  }
}

TEST(DotWireRing, EffectiveCouplingsFollowParity) {
  const Index n = 9;
  const double ca = 6.0, cb = 4.0;
  const auto m = build_dot_wire_ring(n, 1.0, ca, cb);
  const auto d = decompose(m);
  const double l = static_cast<double>(n + 1);
  for (Index j = 0; j < n; ++j) {
    const double k = kPi * static_cast<double>(j + 1) / l;
    const int s = wire_level_parity(n, j);
    EXPECT_NEAR(std::abs(d.couplings(j)), std::sqrt(2.0 / l) * std::abs(std::sin(k)) * std::abs(ca + s * cb), 1e-12);
    EXPECT_NEAR(d.ratios(j), ca / (ca + s * cb), 1e-10);
    // Parity sign read off the eigenvector ends.
    EXPECT_EQ(d.vectors(n - 1, j) / d.vectors(0, j) > 0.0 ? 1 : -1, s);
  }
}

TEST(DotWireRing, OpenCbGivesUnitRatios) {
  const auto m = build_dot_wire_ring(7, 1.0, 0.5, 0.0);
  const auto d = decompose(m);
  for (Index j = 0; j < 7; ++j) EXPECT_NEAR(d.ratios(j), 1.0, 1e-12);
}

TEST(DotWireRing, TooShortRejected) {
  EXPECT_THROW(build_dot_wire_ring(1, 1.0, 1.0, 1.0), InvalidModel);
}

TEST(DotWireRing, ThreeSiteRingRatios) {
  const auto m = build_dot_wire_ring(2, 1.0, 6.0, 4.0);
  const auto d = decompose(m);
  // Bonding level (lower) carries Ca - Cb for N = 2 with C0 > 0.
  EXPECT_NEAR(d.ratios(0), 3.0, 1e-12);
  EXPECT_NEAR(d.ratios(1), 0.6, 1e-12);
}

TEST(DotWireRing, GroundRatioDependsOnLengthParity) {
  EXPECT_NEAR(decompose(build_dot_wire_ring(101, 1.0, 6.0, 4.0)).ratios(0), 0.6, 1e-10);
  EXPECT_NEAR(decompose(build_dot_wire_ring(100, 1.0, 6.0, 4.0)).ratios(0), 3.0, 1e-10);
  EXPECT_NEAR(decompose(build_dot_wire_ring(101, 1.0, 6.0, -4.0)).ratios(0), 3.0, 1e-10);
}

TEST(RingComb, DenseRealisationMatchesLevelForm) {
  for (Index n : {6, 7}) {
    const auto m = build_ring_comb(n, 1.0, 6.0, 4.0);
    const auto d = decompose(m);
    expect_decomposition_invariants(m, d);
    const auto lv = ring_comb_spectrum(n, 1.0, 6.0, 4.0);
    for (Index j = 0; j < n; ++j) {
      EXPECT_NEAR(d.levels(j), lv.levels(j), 1e-12);
      EXPECT_NEAR(d.ratios(j), lv.ratios(j), 1e-12);
    }
    if (n % 2 == 0) {
      for (Index j = 0; j < n; ++j) EXPECT_NEAR(std::abs(d.couplings(j)), std::abs(lv.couplings(j)), 1e-12);
    }
  }
}

TEST(Decompose, RandomNetworkInvariantsAndSumRule) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto m = build_random_network(8, seed);
    const auto d = decompose(m);
    expect_decomposition_invariants(m, d);
    Vec total = Vec::Zero(m.size());
    for (Index site = 0; site < m.size(); ++site) total += bond_splitting_ratios(m, d, site);
    for (Index k = 0; k < m.size(); ++k) EXPECT_NEAR(total(k), 1.0, 1e-10);
  }
}

TEST(Decompose, RatiosAreNotClamped) {
  const auto d = decompose(build_dot_wire_ring(4, 1.0, 6.0, 5.5));
  double hi = 0.0;
  for (Index k = 0; k < d.size(); ++k) hi = std::max(hi, std::abs(d.ratios(k)));
  EXPECT_GT(hi, 1.0);
}

TEST(Decompose, DegenerateLevelsLeaveOneBrightCombination) {
  // Two disconnected identical sites: degenerate pair, both coupled.
  Vec dot(3);
  dot << 0.6, 0.8, 0.3;
  Vec e(3);
  e << 0.5, 0.5, -1.0;
  const auto m = make_network(e, Mat::Zero(3, 3), dot, 0);
  const auto d = decompose(m);
  expect_decomposition_invariants(m, d);
  ASSERT_EQ(d.degenerate_groups.size(), 1u);
  int bright = 0, dark = 0;
  for (Index k : d.degenerate_groups[0]) {
    if (d.is_coupled(k)) {
      ++bright;
      EXPECT_NEAR(std::abs(d.couplings(k)), 1.0, 1e-12);
    } else {
      ++dark;
      EXPECT_TRUE(std::isnan(d.ratios(k)));
    }
  }
  EXPECT_EQ(bright, 1);
  EXPECT_EQ(dark, 1);
}

TEST(Decompose, NondegenerateDarkLevelHasUndefinedRatio) {
  // Ring with Ca = Cb: odd-parity levels decouple though <n|a> != 0.
  const auto d = decompose(build_dot_wire_ring(4, 1.0, 1.0, 1.0));
  int dark = 0;
  for (Index k = 0; k < d.size(); ++k) {
    if (d.is_coupled(k)) continue;
    ++dark;
    EXPECT_TRUE(std::isnan(d.ratios(k)));
    EXPECT_GT(std::abs(d.tagged_overlap(k)), 0.1);
  }
  EXPECT_EQ(dark, 2);
}

TEST(Decompose, WindowedMeanSpacing) {
  Vec e(5), c = Vec::Ones(5);
  e << 0.0, 1.0, 2.0, 4.0, 8.0;
  const auto d = decompose(build_star(e, c), EnergyWindow{-0.5, 4.5});
  EXPECT_NEAR(d.mean_spacing, 4.0 / 3.0, 1e-14);
  EXPECT_NEAR(decompose(build_star(e, c)).mean_spacing, 2.0, 1e-14);
}

TEST(Assemble, FluxIsLocalAndHermitian) {
  const auto m = build_random_network(6, 7);
  const auto h0 = assemble(m, 0.3, 0.0);
  const auto h1 = assemble(m, 0.3, 0.4);
  EXPECT_LT((h1.matrix - h1.matrix.adjoint()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(h0.matrix.imag().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(h0.matrix(0, 0).real(), 0.3);
  CMat diff = h1.matrix - h0.matrix;
  const Index a = m.tagged_site + 1;
  diff(a, 0) = diff(0, a) = 0.0;
  EXPECT_EQ(diff.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Assemble, StarSpectrumIsFluxIndependent) {
  Vec e(3), c(3);
  e << -1.0, 0.2, 1.3;
  c << 0.4, 0.9, -0.6;
  const auto m = build_star(e, c);
  Eigen::SelfAdjointEigenSolver<CMat> a(assemble(m, 0.1, 0.0).matrix, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<CMat> b(assemble(m, 0.1, 1.1).matrix, Eigen::EigenvaluesOnly);
  EXPECT_LT((a.eigenvalues() - b.eigenvalues()).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Assemble, RingSpectrumFeelsFlux) {
  const auto m = build_dot_wire_ring(3, 1.0, 0.8, 0.5);
  Eigen::SelfAdjointEigenSolver<CMat> a(assemble(m, 0.1, 0.0).matrix, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<CMat> b(assemble(m, 0.1, 1.1).matrix, Eigen::EigenvaluesOnly);
  EXPECT_GT((a.eigenvalues() - b.eigenvalues()).cwiseAbs().maxCoeff(), 1e-3);
}
