#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fluctlab/error.hpp"
#include "fluctlab/meanfield.hpp"

using namespace fluctlab;

namespace {

ModelSpec incoherent_kuramoto(double k = 1.0, double sigma = 1.0) {
  return build_kuramoto(k, sigma, dirac_disorder(), uniform_circle_law());
}

// Fourier cosine coefficient a_1 = (1/pi) int p cos(theta) for atom 0.
double mode_one(const DensityGrid& g) {
  return expect_xi(g, [](double th, double) { return std::cos(th); }) / std::numbers::pi;
}

}  // namespace

TEST(DensityGrid, Validation) {
  EXPECT_THROW(DensityGrid(3, {{0.0, 1.0}}), ConfigError);
  EXPECT_THROW(DensityGrid(8, {}), ConfigError);
  EXPECT_THROW(DensityGrid(8, {{0.0, 0.4}, {1.0, 0.4}}), ConfigError);
}

TEST(ExpectXi, Examples) {
  const auto g = uniform_grid(128, {{0.0, 1.0}});
  EXPECT_NEAR(expect_xi(g, [](double, double) { return 1.0; }), 1.0, 1e-14);
  EXPECT_NEAR(expect_xi(g, [](double th, double) { return std::sin(th); }), 0.0, 1e-12);
  EXPECT_NEAR(expect_xi(g, [](double th, double) { return std::cos(th) * std::cos(th); }), 0.5, 1e-10);
}

TEST(ExpectXi, WeightsAtoms) {
  const auto g = uniform_grid(16, {{-1.0, 0.25}, {3.0, 0.75}});
  EXPECT_NEAR(expect_xi(g, [](double, double om) { return om; }), -0.25 + 2.25, 1e-14);
}

TEST(ExpectNu, Examples) {
  const auto g = uniform_grid(64, {{0.0, 1.0}});
  EXPECT_NEAR(expect_nu(g, [](double, double, double) { return 1.0; }), 1.0, 1e-14);
  EXPECT_NEAR(expect_nu(g, [](double, double, double x) { return std::cos(kTwoPi * x); }), 0.0, 1e-12);
  EXPECT_NEAR(expect_nu(g, [](double th, double, double x) { return std::sin(th) * std::cos(kTwoPi * x); }), 0.0,
              1e-12);
}

TEST(CouplingField, IncoherentKuramotoVanishes) {
  const auto g = uniform_grid(256, {{0.0, 1.0}});
  const auto f = coupling_field(g, incoherent_kuramoto(2.0), 0.3);
  for (double th = 0.0; th < kTwoPi; th += 0.1) EXPECT_NEAR(f(th, 0.0), 0.0, 1e-10);
}

TEST(CouplingField, ProbeEqualsIntegralPsi) {
  const auto g = initial_grid(build_probe(1.0), 32);
  for (double alpha : {0.0, 0.25, 0.75}) {
    const auto f = coupling_field(g, build_probe(1.0), alpha);
    for (double th : {0.0, 1.0, 6.0}) EXPECT_NEAR(f(th, 0.0), integral_psi(alpha), 1e-13);
  }
}

TEST(CouplingField, LinearInGamma) {
  const auto g = initial_grid(build_kuramoto(1.0, 1.0, dirac_disorder(), cosine_circle_law(0.7)), 64);
  const auto f1 = coupling_field(g, build_kuramoto(1.0, 1.0, dirac_disorder(), cosine_circle_law(0.7)), 0.4);
  const auto f3 = coupling_field(g, build_kuramoto(3.0, 1.0, dirac_disorder(), cosine_circle_law(0.7)), 0.4);
  for (double th : {0.2, 1.7, 4.0}) EXPECT_NEAR(f3(th, 0.0), 3.0 * f1(th, 0.0), 1e-13);
}

TEST(CouplingField, SeparableAgreesWithQuadratureFallback) {
  auto model = build_kuramoto(1.3, 1.0, symmetric_two_point_disorder(0.5), cosine_circle_law(0.5));
  const auto g = initial_grid(model, 64);
  const auto separable = coupling_field(g, model, 0.6);
  model.separable.clear();
  const auto generic = coupling_field(g, model, 0.6);
  for (double th : {0.0, 0.9, 3.3}) {
    for (double om : {-0.5, 0.5}) EXPECT_NEAR(separable(th, om), generic(th, om), 1e-12);
  }
}

TEST(SolveDensity, IncoherentStateIsStationary) {
  const auto model = incoherent_kuramoto(1.5, 1.0);
  const auto sol = solve_density(model, 0.25, initial_grid(model, 256), 1e-4, 1.0, 1000);
  for (const auto& g : sol.snapshots) {
    for (double v : g.values) EXPECT_NEAR(v, 1.0 / kTwoPi, 1e-8);
    EXPECT_NEAR(g.conditional_mass(0), 1.0, 1e-8);
  }
  EXPECT_NEAR(sol.snapshots.back().time, 1.0, 1e-12);
}

TEST(SolveDensity, HeatEquationModeDecay) {
  const auto model = build_free(0.0, 1.0, StateSpace::circle, cosine_circle_law(1.0));
  const auto sol = solve_density(model, 0.5, initial_grid(model, 256), 1e-4, 1.0, 10000);
  const double a0 = mode_one(sol.snapshots.front());
  const double a1 = mode_one(sol.snapshots.back());
  EXPECT_NEAR(a1 / a0, std::exp(-0.5), 1e-3 * std::exp(-0.5));
}

TEST(SolveDensity, RefinementReducesError) {
  const auto model = build_free(0.0, 1.0, StateSpace::circle, cosine_circle_law(1.0));
  auto error = [&](std::size_t cells, double dt) {
    const auto sol = solve_density(model, 0.0, initial_grid(model, cells), dt, 1.0, 1u << 30);
    return std::abs(mode_one(sol.snapshots.back()) / mode_one(sol.snapshots.front()) - std::exp(-0.5));
  };
  const double coarse = error(64, 1e-4);
  const double fine = error(128, 5e-5);
  EXPECT_GE(coarse / fine, 2.0) << coarse << " " << fine;
}

TEST(SolveDensity, MassAndPositivityWithDriftAndDisorder) {
  const auto model = build_kuramoto(2.0, 0.8, symmetric_two_point_disorder(1.0), cosine_circle_law(0.9));
  const auto sol = solve_density(model, 0.75, initial_grid(model, 128), 2e-4, 0.5, 50);
  for (const auto& g : sol.snapshots) {
    for (std::size_t a = 0; a < g.atoms.size(); ++a) EXPECT_NEAR(g.conditional_mass(a), 1.0, 1e-8);
    for (double v : g.values) EXPECT_GE(v, 0.0);
  }
}

TEST(SolveDensity, CflViolationReportsAdmissibleStep) {
  const auto model = incoherent_kuramoto(1.0, 1.0);
  try {
    solve_density(model, 0.25, initial_grid(model, 256), 1e-2, 1.0);
    FAIL() << "expected a CFL error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("admissible dt"), std::string::npos);
  }
}

TEST(SolveDensity, RejectsLineModels) {
  const auto model = build_free(0.0, 1.0, StateSpace::line, normal_line_law(0.0, 1.0));
  EXPECT_THROW(initial_grid(model, 64), ConfigError);
}

TEST(MeanFieldPath, PiecewiseConstantLookup) {
  const auto model = build_kuramoto(1.0, 1.0, dirac_disorder(), cosine_circle_law(0.8));
  const auto sol = solve_density(model, 0.3, initial_grid(model, 64), 1e-3, 0.1, 10);
  const auto path = MeanFieldPath::from_grids(model, 0.3, sol.snapshots);
  EXPECT_NEAR(path.t_end(), 0.1, 1e-12);
  auto cos_mean = [&](double t) { return path.expect(t, [](double th, double) { return std::cos(th); }); };
  EXPECT_EQ(cos_mean(0.0), expect_xi(sol.snapshots[0], [](double th, double) { return std::cos(th); }));
  EXPECT_EQ(cos_mean(0.015), expect_xi(sol.snapshots[1], [](double th, double) { return std::cos(th); }));
  EXPECT_EQ(cos_mean(0.1), expect_xi(sol.snapshots.back(), [](double th, double) { return std::cos(th); }));
}
