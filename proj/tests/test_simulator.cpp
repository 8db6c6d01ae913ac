#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "fluctlab/error.hpp"
#include "fluctlab/fluctuation.hpp"
#include "fluctlab/parallel.hpp"
#include "fluctlab/simulator.hpp"

using namespace fluctlab;

namespace {

std::shared_ptr<const Lattice> lattice(std::int64_t n, double alpha) { return std::make_shared<const Lattice>(n, alpha); }

ModelSpec incoherent(double k = 1.0, double sigma = 1.0) {
  return build_kuramoto(k, sigma, dirac_disorder(), uniform_circle_law());
}

ParticleState random_state(const ModelSpec& m, std::shared_ptr<const Lattice> lat, std::uint64_t seed) {
  return initial_state(m, std::move(lat), seed);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST(SimConfig, Validation) {
  SimConfig c;
  EXPECT_NO_THROW(c.validate());
  c.dt = 2.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SimConfig{};
  c.record_stride = 2000;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SimConfig{};
  c.dt = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(InteractionField, ProbeGivesMeanWeight) {
  for (double alpha : {0.0, 0.3, 0.75}) {
    const auto lat = lattice(64, alpha);
    const auto m = build_probe(1.0);
    const auto s = random_state(m, lat, 1);
    for (auto method : {ConvolutionMethod::direct, ConvolutionMethod::fast}) {
      for (double v : interaction_field(s, m, method)) EXPECT_NEAR(v, mean_weight(*lat), 1e-12);
    }
  }
}

TEST(InteractionField, KuramotoSyncedStateIsZero) {
  const auto lat = lattice(128, 0.5);
  const auto m = incoherent();
  auto s = make_state(lat, std::vector<double>(lat->size(), 1.234), std::vector<double>(lat->size(), 0.0));
  for (auto method : {ConvolutionMethod::direct, ConvolutionMethod::fast}) {
    for (double v : interaction_field(s, m, method)) EXPECT_NEAR(v, 0.0, 1e-13);
  }
}

TEST(InteractionField, FastMatchesDirect) {
  const auto m = build_kuramoto(1.7, 1.0, symmetric_two_point_disorder(0.4), uniform_circle_law());
  for (double alpha : {0.1, 0.5, 0.9}) {
    const auto lat = lattice(1 << 9, alpha);
    const auto s = random_state(m, lat, 7);
    EXPECT_LE(max_abs_diff(interaction_field(s, m, ConvolutionMethod::fast),
                           interaction_field(s, m, ConvolutionMethod::direct)),
              1e-10);
  }
}

TEST(InteractionField, FastRequiresSeparableForm) {
  auto m = incoherent();
  m.separable.clear();
  const auto lat = lattice(16, 0.5);
  const auto s = random_state(incoherent(), lat, 1);
  EXPECT_THROW(interaction_field(s, m, ConvolutionMethod::fast), ConfigError);
  EXPECT_NO_THROW(interaction_field(s, m, ConvolutionMethod::automatic));
}

TEST(EmStep, ZeroDynamicsOnlyAdvancesTime) {
  const auto lat = lattice(8, 0.5);
  const auto m = build_free(0.0, 1.0);
  auto s = random_state(m, lat, 3);
  const auto before = s.theta;
  InteractionEngine engine(m, lat);
  std::vector<double> zeros(lat->size(), 0.0);
  em_step(s, m, engine, 0.01, zeros);
  EXPECT_EQ(s.theta, before);
  EXPECT_DOUBLE_EQ(s.time, 0.01);
}

TEST(EmStep, PureDrift) {
  const auto lat = lattice(8, 0.5);
  const auto m = build_free(1.0, 0.0, StateSpace::line, normal_line_law(0.0, 1.0));
  auto s = random_state(m, lat, 3);
  const auto before = s.theta;
  InteractionEngine engine(m, lat);
  NormalSource rng(1);
  em_step(s, m, engine, 0.125, rng);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(s.theta[i], before[i] + 0.125);
}

TEST(EmStep, ProbeCouplingGrowsLinearly) {
  const auto lat = lattice(32, 0.75);
  const auto m = build_probe(1.0, 0.0);
  const auto path = translating_dirac_path(0.0, integral_psi(0.75));
  auto s = random_state(m, lat, 5);
  s.theta_bar = s.theta;
  InteractionEngine engine(m, lat);
  std::vector<double> zeros(lat->size(), 0.0);
  const double dt = 0.01;
  for (int k = 1; k <= 5; ++k) {
    em_step(s, m, engine, dt, zeros, &path);
    for (std::size_t i = 0; i < lat->size(); ++i) {
      double d = s.theta[i] - (*s.theta_bar)[i];
      d = std::remainder(d, kTwoPi);
      EXPECT_NEAR(d, k * dt * (mean_weight(*lat) - integral_psi(0.75)), 1e-12);
    }
  }
}

TEST(Simulate, Deterministic) {
  const auto lat = lattice(64, 0.25);
  const auto m = incoherent(1.0, 1.0);
  SimConfig c;
  c.dt = 0.01;
  c.t_end = 0.2;
  c.seed = 42;
  c.record_stride = 5;
  const std::vector<Observable> obs{order_observable(), mean_observable(sin_fn(1)), martingale_observable(cos_fn(1))};
  const auto a = simulate(m, lat, c, obs);
  const auto b = simulate(m, lat, c, obs);
  ASSERT_EQ(a.records.size(), b.records.size());
  ASSERT_EQ(a.records.size(), 5u * 3u);
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_EQ(a.records[k].time, b.records[k].time);
    EXPECT_EQ(a.records[k].id, b.records[k].id);
    EXPECT_EQ(a.records[k].value, b.records[k].value);
  }
  EXPECT_EQ(a.final_state.theta, b.final_state.theta);
}

TEST(Simulate, RotationEquivariance) {
  const auto lat = lattice(128, 0.6);
  const auto m = incoherent(1.3, 0.7);
  SimConfig c;
  c.dt = 0.01;
  c.t_end = 0.5;
  c.seed = 9;
  const double phi = 0.8;
  auto s0 = initial_state(m, lat, c.seed);
  auto s1 = s0;
  for (double& t : s1.theta) t = wrap_angle(t + phi);
  const auto a = simulate(m, lat, c, {}, s0);
  const auto b = simulate(m, lat, c, {}, s1);
  for (std::size_t i = 0; i < lat->size(); ++i) {
    EXPECT_NEAR(std::remainder(b.final_state.theta[i] - a.final_state.theta[i] - phi, kTwoPi), 0.0, 1e-9);
  }
}

TEST(Simulate, FreeBrownianVariance) {
  const auto lat = lattice(8, 0.5);
  const auto m = build_free(0.0, 1.0, StateSpace::line, normal_line_law(0.0, 1.0));
  SimConfig c;
  c.dt = 0.01;
  c.t_end = 0.5;
  const std::size_t replicas = 500;
  std::vector<double> inc;
  std::vector<double> first, second;
  for (std::size_t r = 0; r < replicas; ++r) {
    c.seed = derive_seed(77, r);
    auto s0 = initial_state(m, lat, c.seed);
    std::vector<double> mid;
    auto observer = [&](const ParticleState& s, std::size_t n) {
      if (n == 25) mid = s.theta;
    };
    const auto s1 = run_steps(m, c, s0, observer);
    inc.push_back(s1.theta[0] - s0.theta[0]);
    first.push_back(mid[1] - s0.theta[1]);
    second.push_back(s1.theta[1] - mid[1]);
  }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  const double mu = mean(inc);
  double var = 0.0;
  for (double v : inc) var += (v - mu) * (v - mu);
  var /= replicas - 1;
  const double se = 0.5 * std::sqrt(2.0 / (replicas - 1));
  EXPECT_LT(std::abs(var - 0.5), 3.0 * se);
  // disjoint increments uncorrelated
  const double m1 = mean(first), m2 = mean(second);
  double cov = 0.0;
  for (std::size_t r = 0; r < replicas; ++r) cov += (first[r] - m1) * (second[r] - m2);
  cov /= replicas - 1;
  EXPECT_LT(std::abs(cov), 3.0 * 0.25 / std::sqrt(static_cast<double>(replicas)));
}

TEST(Simulate, ConstantMartingaleIsZero) {
  const auto lat = lattice(32, 0.3);
  SimConfig c;
  c.dt = 0.01;
  c.t_end = 0.1;
  const auto t = simulate(incoherent(), lat, c, {martingale_observable(constant_fn())});
  for (const auto& r : t.records) EXPECT_EQ(r.value, 0.0);
}

TEST(SimulateCoupled, NoInteractionMeansNoCouplingError) {
  const auto lat = lattice(64, 0.4);
  const auto m = build_free(0.3, 1.0);
  SimConfig c;
  c.dt = 0.01;
  c.t_end = 1.0;
  const auto path = translating_dirac_path(0.0, 0.0);
  const auto run = simulate_coupled(m, lat, c, path);
  for (double e : run.error) EXPECT_LE(e, 1e-12);
}

TEST(SimulateCoupled, ProbeClosedForm) {
  for (double alpha : {0.25, 0.75}) {
    const std::int64_t n = 1 << 8;
    const auto lat = lattice(n, alpha);
    const auto m = build_probe(1.0, 1.0);
    SimConfig c;
    c.dt = 1e-2;
    c.t_end = 1.0;
    c.record_stride = 10;
    const auto path = translating_dirac_path(0.0, integral_psi(alpha));
    const auto run = simulate_coupled(m, lat, c, path);
    const double rate = std::abs(mean_weight(*lat) - integral_psi(alpha));
    for (std::size_t k = 0; k < run.times.size(); ++k) {
      EXPECT_NEAR(run.error[k], run.times[k] * rate, 1e-12);
    }
    EXPECT_NEAR(run.running_sup.back(),
                std::abs(riemann_residual(n, alpha)) * std::pow(static_cast<double>(n), alpha - 1.0), 1e-12);
  }
}

TEST(SimulateCoupled, PathTooShort) {
  const auto lat = lattice(16, 0.5);
  const auto m = incoherent();
  const auto sol = solve_density(m, 0.5, initial_grid(m, 32), 1e-3, 0.5);
  const auto path = MeanFieldPath::from_grids(m, 0.5, sol.snapshots);
  SimConfig c;
  EXPECT_THROW(simulate_coupled(m, lat, c, path), ConfigError);
}

TEST(ParallelMap, IndependentOfWorkers) {
  auto f = [](std::size_t i) { return static_cast<double>(derive_seed(1, i) % 1000); };
  EXPECT_EQ(parallel_map(37, 1, f), parallel_map(37, 4, f));
}

TEST(ParallelMap, PropagatesErrors) {
  EXPECT_THROW(parallel_map(10, 3, [](std::size_t i) -> int {
                 if (i == 4) throw NumericError("boom");
                 return 0;
               }),
               NumericError);
}

TEST(ParseTestFn, Forms) {
  EXPECT_EQ(parse_test_fn("sin2").id, sin_fn(2).id);
  EXPECT_EQ(parse_test_fn("cos1*sinx3").id, with_x(cos_fn(1), XPart::Kind::sin, 3).id);
  const auto theta = parse_test_fn("theta");
  EXPECT_EQ(theta.value(0.7, 0.0, 0.1), 0.7);
  EXPECT_EQ(theta.grad(0.7, 0.0, 0.1), 1.0);
  for (const char* bad : {"", "sin", "tan1", "sin-1", "cos1*x2", "theta2"}) {
    EXPECT_THROW(parse_test_fn(bad), ConfigError) << bad;
  }
}
