#include <cmath>
#include <random>
#include <vector>

#include <boost/math/special_functions/zeta.hpp>
#include <gtest/gtest.h>

#include "fluctlab/error.hpp"
#include "fluctlab/lattice.hpp"

using namespace fluctlab;

namespace {

// Brute-force sum_j Psi(x_i, x_j) / |Lambda| straight from the definition.
double brute_mean_weight(std::int64_t n_half, double alpha, std::int64_t site) {
  const double size = 2.0 * static_cast<double>(n_half);
  double acc = 0.0;
  for (std::int64_t j = -n_half; j < n_half; ++j) {
    acc += psi(static_cast<double>(site) / size, static_cast<double>(j) / size, alpha);
  }
  return acc / size;
}

}  // namespace

TEST(CircleDistance, Examples) {
  EXPECT_DOUBLE_EQ(circle_distance(0.25, 0.75), 0.5);
  EXPECT_NEAR(circle_distance(0.9, 0.1), 0.2, 1e-15);
  EXPECT_EQ(circle_distance(0.37, 0.37), 0.0);
}

TEST(CircleDistance, MetricProperties) {
  std::mt19937_64 eng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 2000; ++k) {
    const double x = u(eng), y = u(eng), z = u(eng);
    EXPECT_DOUBLE_EQ(circle_distance(x, y), circle_distance(y, x));
    EXPECT_LE(circle_distance(x, z), circle_distance(x, y) + circle_distance(y, z) + 1e-15);
    EXPECT_LE(circle_distance(x, y), 0.5);
  }
}

TEST(BuildLattice, KernelExamples) {
  const auto flat = build_lattice(2, 0.0);
  EXPECT_EQ(flat.kernel(), (std::vector<double>{0.0, 1.0, 1.0, 1.0}));

  const auto half = build_lattice(2, 0.5);
  ASSERT_EQ(half.size(), 4u);
  EXPECT_EQ(half.kernel()[0], 0.0);
  EXPECT_NEAR(half.kernel()[1], 2.0, 1e-15);
  EXPECT_NEAR(half.kernel()[2], std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(half.kernel()[3], 2.0, 1e-15);

  const auto tiny = build_lattice(1, 0.5);
  ASSERT_EQ(tiny.size(), 2u);
  EXPECT_NEAR(tiny.kernel()[1], std::sqrt(2.0), 1e-15);
}

TEST(BuildLattice, PositionsAndIndexConvention) {
  const auto lat = build_lattice(4, 0.3);
  ASSERT_EQ(lat.size(), 8u);
  EXPECT_DOUBLE_EQ(lat.positions().front(), -0.5);
  EXPECT_DOUBLE_EQ(lat.positions()[4], 0.0);
  EXPECT_DOUBLE_EQ(lat.positions().back(), 3.0 / 8.0);
}

TEST(BuildLattice, RejectsInvalidInput) {
  EXPECT_THROW(build_lattice(0, 0.5), ConfigError);
  EXPECT_THROW(build_lattice(4, 1.0), ConfigError);
  EXPECT_THROW(build_lattice(4, -0.1), ConfigError);
}

TEST(BuildLattice, KernelSymmetryAndSelfWeight) {
  for (double alpha : {0.0, 0.25, 0.5, 0.75, 0.99}) {
    for (std::int64_t n : {1, 2, 7, 64, 1000}) {
      const auto lat = build_lattice(n, alpha);
      const auto& k = lat.kernel();
      EXPECT_EQ(k[0], 0.0);
      for (std::size_t j = 1; j < k.size(); ++j) EXPECT_EQ(k[j], k[k.size() - j]);
    }
  }
}

TEST(BuildLattice, KernelMatchesPsi) {
  const auto lat = build_lattice(16, 0.6);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    for (std::size_t j = 0; j < lat.size(); ++j) {
      EXPECT_NEAR(lat.weight(i, j), psi(lat.positions()[i], lat.positions()[j], 0.6), 1e-12);
    }
  }
}

TEST(MeanWeight, Examples) {
  EXPECT_NEAR(mean_weight(2, 0.0), 0.75, 1e-15);
  EXPECT_NEAR(mean_weight(2, 0.5), 1.35355339059327376, 1e-14);
  for (std::int64_t n : {1, 3, 10, 12345}) {
    EXPECT_NEAR(mean_weight(n, 0.0), 1.0 - 0.5 / static_cast<double>(n), 1e-14);
  }
}

TEST(MeanWeight, SiteInvarianceAgainstBruteForce) {
  for (double alpha : {0.0, 0.3, 0.5, 0.8}) {
    for (std::int64_t n : {1, 2, 5, 33, 128}) {
      const double closed = mean_weight(n, alpha);
      for (std::int64_t site = -n; site < n; ++site) {
        EXPECT_NEAR(brute_mean_weight(n, alpha, site), closed, 1e-12) << alpha << " " << n << " " << site;
      }
    }
  }
}

TEST(IntegralPsi, Examples) {
  EXPECT_DOUBLE_EQ(integral_psi(0.0), 1.0);
  EXPECT_NEAR(integral_psi(0.5), 2.828427124746190, 1e-14);
  EXPECT_NEAR(integral_psi(0.75), 6.727171322029716, 1e-14);
}

TEST(IntegralPsi, MatchesQuadrature) {
  for (double alpha : {0.1, 0.4, 0.7}) {
    EXPECT_NEAR(psi_weighted_integral(alpha, 0.3, [](double) { return 1.0; }), integral_psi(alpha), 1e-11);
  }
}

TEST(RiemannResidual, Examples) {
  EXPECT_NEAR(riemann_residual(2, 0.5), -2.08578643762690495, 1e-13);
  for (std::int64_t n : {1, 2, 17, 1 << 10, 1 << 20}) EXPECT_EQ(riemann_residual(n, 0.0), -0.5);
}

TEST(RiemannResidual, AgreesWithDefinition) {
  for (double alpha : {0.2, 0.5, 0.75}) {
    for (std::int64_t n : {3, 40, 500}) {
      const double direct = std::pow(static_cast<double>(n), 1.0 - alpha) * (mean_weight(n, alpha) - integral_psi(alpha));
      EXPECT_NEAR(riemann_residual(n, alpha), direct, 1e-10);
    }
  }
}

TEST(RiemannResidual, LargeNApproachesChi) {
  EXPECT_NEAR(riemann_residual(1 << 20, 0.75), chi_alpha(0.75, 1e-6), 1e-2);
}

TEST(ChiAlpha, ZetaOracle) {
  // chi(alpha) = 2^alpha zeta(alpha): an independent oracle for the quadrature.
  for (double alpha : {0.1, 0.25, 0.5, 0.75, 0.9}) {
    const double oracle = std::pow(2.0, alpha) * boost::math::zeta(alpha);
    const auto r = chi_alpha_detailed(alpha, 1e-8);
    EXPECT_NEAR(r.value, oracle, 1e-8) << alpha;
    EXPECT_LE(r.error_bound, 1e-8);
    EXPECT_NE(r.value, 0.0);
  }
}

TEST(ChiAlpha, ReferenceValues) {
  // high-precision reference values 2^a zeta(a)
  EXPECT_NEAR(chi_alpha(0.25, 1e-9), -0.967156466015507981, 1e-8);
  EXPECT_NEAR(chi_alpha(0.5, 1e-9), -2.065253152231217183, 1e-8);
  EXPECT_NEAR(chi_alpha(0.75, 1e-9), -5.787529091494459765, 1e-8);
  EXPECT_EQ(chi_alpha(0.0, 1e-3), -0.5);
}

TEST(ChiAlpha, RejectsBadInput) {
  EXPECT_THROW(chi_alpha(0.5, 0.0), ConfigError);
  EXPECT_THROW(chi_alpha(1.2, 1e-6), ConfigError);
}

TEST(ChiAlpha, ReportsUnreachableTolerance) {
  EXPECT_THROW(chi_alpha(0.05, 1e-14), NumericError);
}

TEST(WeightSumGrowth, BruteForce) {
  for (double beta : {0.5, 1.0, 2.0}) {
    for (std::int64_t n : {1, 2, 9}) {
      const double size = 2.0 * static_cast<double>(n);
      double brute = 0.0;
      for (std::int64_t j = 1; j < 2 * n; ++j) brute += std::pow(circle_distance(0.0, static_cast<double>(j) / size), -beta);
      EXPECT_NEAR(weight_sum_growth(n, beta), brute, 1e-10 * brute);
    }
  }
  // distances 1/4, 1/2, 1/4
  EXPECT_NEAR(weight_sum_growth(2, 1.0), 10.0, 1e-13);
}

TEST(WeightSumGrowth, GrowthRegimes) {
  double lo_half = 1e300, hi_half = 0.0, lo_one = 1e300, hi_one = 0.0, lo_two = 1e300, hi_two = 0.0;
  for (int p = 8; p <= 16; ++p) {
    const std::int64_t n = std::int64_t{1} << p;
    const double nd = static_cast<double>(n);
    const double a = weight_sum_growth(n, 0.5) / nd;
    const double b = weight_sum_growth(n, 1.0) / (nd * std::log(nd));
    const double c = weight_sum_growth(n, 2.0) / (nd * nd);
    lo_half = std::min(lo_half, a), hi_half = std::max(hi_half, a);
    lo_one = std::min(lo_one, b), hi_one = std::max(hi_one, b);
    lo_two = std::min(lo_two, c), hi_two = std::max(hi_two, c);
  }
  EXPECT_LT(hi_half / lo_half, 1.1);
  EXPECT_LT(hi_one / lo_one, 1.5);
  EXPECT_LT(hi_two / lo_two, 1.01);
}

TEST(KernelBound, HolderType) {
  // |Psi(x,y) - Psi(x,z)| <= C d(y,z) (d(x,y)^(-a-1) + d(x,z)^(-a-1)) with C = a.
  std::mt19937_64 eng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double alpha : {0.25, 0.75}) {
    for (int k = 0; k < 5000; ++k) {
      const double x = u(eng), y = u(eng), z = u(eng);
      const double dy = circle_distance(x, y), dz = circle_distance(x, z);
      if (dy == 0.0 || dz == 0.0) continue;
      const double lhs = std::abs(psi(x, y, alpha) - psi(x, z, alpha));
      const double rhs = alpha * circle_distance(y, z) * (std::pow(dy, -alpha - 1.0) + std::pow(dz, -alpha - 1.0));
      EXPECT_LE(lhs, rhs * (1.0 + 1e-12));
    }
  }
}

TEST(MeanWeight, BoundedAlongLadder) {
  for (double alpha : {0.25, 0.5, 0.75}) {
    const double chi = std::abs(chi_alpha(alpha, 1e-8));
    for (int p = 1; p <= 18; ++p) {
      const std::int64_t n = std::int64_t{1} << p;
      const double nd = static_cast<double>(n);
      EXPECT_LE(mean_weight(n, alpha), integral_psi(alpha) + chi * std::pow(nd, alpha - 1.0) + 1.0 / nd);
    }
  }
}

TEST(PsiFourier, QuadratureOracle) {
  // references: 30-digit tanh-sinh quadrature after the same singularity-removing substitution
  EXPECT_NEAR(psi_fourier(0.25, 1), 0.261801083988134451, 1e-10);
  EXPECT_NEAR(psi_fourier(0.25, 3), 0.106929444253917746, 1e-10);
  EXPECT_NEAR(psi_fourier(0.75, 1), 4.32937408567636892, 1e-10);
  EXPECT_NEAR(psi_fourier(0.75, 2), 3.52908509506061501, 1e-10);
  EXPECT_DOUBLE_EQ(psi_fourier(0.4, 0), integral_psi(0.4));
}

TEST(PsiFourier, ShiftCovariance) {
  const double alpha = 0.6;
  for (double x0 : {0.0, 0.13, 0.71}) {
    const double c = psi_weighted_integral(alpha, x0, [](double y) { return std::cos(2.0 * kTwoPi * y); });
    const double s = psi_weighted_integral(alpha, x0, [](double y) { return std::sin(2.0 * kTwoPi * y); });
    EXPECT_NEAR(c, psi_fourier(alpha, 2) * std::cos(2.0 * kTwoPi * x0), 1e-9);
    EXPECT_NEAR(s, psi_fourier(alpha, 2) * std::sin(2.0 * kTwoPi * x0), 1e-9);
  }
}
