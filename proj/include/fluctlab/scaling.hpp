#pragma once

// N-ladder experiments and log-log exponent fits.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fluctlab/error.hpp"
#include "fluctlab/fluctuation.hpp"
#include "fluctlab/lattice.hpp"
#include "fluctlab/meanfield.hpp"
#include "fluctlab/model.hpp"
#include "fluctlab/parallel.hpp"
#include "fluctlab/rng.hpp"
#include "fluctlab/simulator.hpp"
#include "fluctlab/test_functions.hpp"

namespace fluctlab {

enum class Statistic { sd, abs_mean, coupling_error };

inline Statistic parse_statistic(const std::string& s) {
  if (s == "sd") return Statistic::sd;
  if (s == "bias" || s == "abs_mean") return Statistic::abs_mean;
  if (s == "coupling" || s == "coupling_error") return Statistic::coupling_error;
  throw ConfigError("unknown statistic '" + s + "' (expected sd, bias or coupling)");
}

inline const char* to_string(Statistic s) {
  switch (s) {
    case Statistic::sd: return "sd";
    case Statistic::abs_mean: return "bias";
    case Statistic::coupling_error: return "coupling";
  }
  return "?";
}

struct LadderConfig {
  std::vector<double> alphas;
  std::vector<std::int64_t> n_halves;
  std::size_t replicas = 200;
  std::uint64_t base_seed = 0;
  TestFn1 observable = sin_fn(1);
  SimConfig sim;
  std::size_t workers = 1;

  void validate() const {
    if (alphas.empty()) throw ConfigError("ladder needs at least one alpha");
    for (double a : alphas) check_alpha(a);
    if (n_halves.empty()) throw ConfigError("ladder needs at least one N");
    for (std::size_t k = 0; k < n_halves.size(); ++k) {
      if (n_halves[k] < 1) throw ConfigError("ladder N must be >= 1");
      if (k > 0 && n_halves[k] <= n_halves[k - 1]) throw ConfigError("ladder must be strictly increasing");
    }
    if (replicas < 1) throw ConfigError("ladder needs at least one replica");
    sim.validate();
  }
};

struct LadderRow {
  double alpha = 0.0;
  std::int64_t n_half = 0;
  std::size_t replicas = 0;
  Statistic statistic = Statistic::sd;
  double value = 0.0;
  double stderr_ = 0.0;
};

// Limit path for a given alpha over [0, t_end].
using LimitProvider = std::function<MeanFieldPath(double alpha)>;

// Seed of replica r in cell (alpha index a, ladder index k).
inline std::uint64_t replica_seed(std::uint64_t base, std::size_t a, std::size_t k, std::size_t r) {
  return derive_seed(derive_seed(derive_seed(base, a), k), r);
}

// One row per (alpha, N). Per replica the run yields
//   sd, abs_mean:    X = <nu_N(T) - nu(T), f>
//   coupling_error:  sup_t max_i |theta_i - theta_bar_i|
// and the row aggregates: sample sd (stderr sd / sqrt(2(R-1))), |mean| or mean
// (stderr sd / sqrt(R)).
inline std::vector<LadderRow> run_ladder(const LadderConfig& config, const ModelSpec& model,
                                         const LimitProvider& limits, Statistic statistic) {
  config.validate();
  if (statistic == Statistic::sd && config.replicas < 2) throw ConfigError("sd statistic needs replicas >= 2");

  struct Cell {
    std::size_t a, k;
    std::shared_ptr<const Lattice> lattice;
    std::shared_ptr<const MeanFieldPath> limit;
  };
  std::vector<Cell> cells;
  for (std::size_t a = 0; a < config.alphas.size(); ++a) {
    auto limit = std::make_shared<const MeanFieldPath>(limits(config.alphas[a]));
    for (std::size_t k = 0; k < config.n_halves.size(); ++k) {
      cells.push_back({a, k, std::make_shared<const Lattice>(config.n_halves[k], config.alphas[a]), limit});
    }
  }

  const std::size_t total = cells.size() * config.replicas;
  auto samples = parallel_map(total, config.workers, [&](std::size_t item) {
    const Cell& cell = cells[item / config.replicas];
    const std::size_t r = item % config.replicas;
    SimConfig sim = config.sim;
    sim.seed = replica_seed(config.base_seed, cell.a, cell.k, r);
    try {
      if (statistic == Statistic::coupling_error) {
        const auto run = simulate_coupled(model, cell.lattice, sim, *cell.limit);
        return run.running_sup.back();
      }
      ParticleState state = run_steps(model, sim, initial_state(model, cell.lattice, sim.seed), {});
      return empirical_mean(state, config.observable) - expect_nu(*cell.limit, state.time, config.observable);
    } catch (const std::exception& e) {
      const std::string where = " (alpha=" + std::to_string(config.alphas[cell.a]) +
                                ", N=" + std::to_string(config.n_halves[cell.k]) + ", replica=" + std::to_string(r) + ")";
      if (dynamic_cast<const ConfigError*>(&e) != nullptr) throw ConfigError(e.what() + where);
      throw NumericError(e.what() + where);
    }
  });

  std::vector<LadderRow> rows;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    CompensatedSum sum;
    for (std::size_t r = 0; r < config.replicas; ++r) sum.add(samples[c * config.replicas + r]);
    const double rep = static_cast<double>(config.replicas);
    const double mean = sum.value() / rep;
    CompensatedSum sq;
    for (std::size_t r = 0; r < config.replicas; ++r) {
      const double d = samples[c * config.replicas + r] - mean;
      sq.add(d * d);
    }
    const double sd = config.replicas > 1 ? std::sqrt(sq.value() / (rep - 1.0)) : 0.0;
    LadderRow row;
    row.alpha = config.alphas[cells[c].a];
    row.n_half = config.n_halves[cells[c].k];
    row.replicas = config.replicas;
    row.statistic = statistic;
    switch (statistic) {
      case Statistic::sd:
        row.value = sd;
        row.stderr_ = sd / std::sqrt(2.0 * (rep - 1.0));
        break;
      case Statistic::abs_mean:
        row.value = std::abs(mean);
        row.stderr_ = sd / std::sqrt(rep);
        break;
      case Statistic::coupling_error:
        row.value = mean;
        row.stderr_ = sd / std::sqrt(rep);
        break;
    }
    rows.push_back(row);
  }
  return rows;
}

struct FitPoint {
  double n = 0.0;
  double value = 0.0;
  double weight = 1.0;
};

enum class Regime { gaussian, deterministic, critical, mismatch };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::gaussian: return "gaussian";
    case Regime::deterministic: return "deterministic";
    case Regime::critical: return "critical";
    case Regime::mismatch: return "mismatch";
  }
  return "?";
}

struct ScalingEstimate {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_ = 0.0;
  double r_squared = 0.0;
  double regime_predicted = 0.0;
  bool regime_match = false;
};

// Weighted least squares of log(value) on log(N).
inline ScalingEstimate fit_exponent(const std::vector<FitPoint>& points) {
  if (points.size() < 3) throw ConfigError("fit_exponent needs at least 3 points");
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (const auto& p : points) {
    if (!(p.value > 0.0)) throw NumericError("fit_exponent: nonpositive value " + std::to_string(p.value));
    if (!(p.n > 0.0)) throw ConfigError("fit_exponent: nonpositive N");
    if (!(p.weight > 0.0)) throw ConfigError("fit_exponent: weights must be > 0");
    sw += p.weight;
    sx += p.weight * std::log(p.n);
    sy += p.weight * std::log(p.value);
  }
  const double xbar = sx / sw;
  const double ybar = sy / sw;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : points) {
    const double dx = std::log(p.n) - xbar;
    const double dy = std::log(p.value) - ybar;
    sxx += p.weight * dx * dx;
    sxy += p.weight * dx * dy;
    syy += p.weight * dy * dy;
  }
  if (!(sxx > 0.0)) throw ConfigError("fit_exponent needs at least two distinct N");
  ScalingEstimate est;
  est.slope = sxy / sxx;
  est.intercept = ybar - est.slope * xbar;
  double ssr = 0.0;
  for (const auto& p : points) {
    const double res = std::log(p.value) - (est.intercept + est.slope * std::log(p.n));
    ssr += p.weight * res * res;
  }
  const double dof = static_cast<double>(points.size()) - 2.0;
  est.stderr_ = std::sqrt(std::max(0.0, ssr / dof / sxx));
  est.r_squared = syy > 0.0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
  return est;
}

// Weights 1/var(log value) with var(log value) ~ (stderr/value)^2, floored.
inline std::vector<FitPoint> fit_points(const std::vector<LadderRow>& rows, double alpha,
                                        double relative_variance_floor = 1e-8) {
  std::vector<FitPoint> pts;
  for (const auto& r : rows) {
    if (r.alpha != alpha) continue;
    const double rel = r.value > 0.0 ? r.stderr_ / r.value : 0.0;
    pts.push_back({static_cast<double>(r.n_half), r.value, 1.0 / std::max(rel * rel, relative_variance_floor)});
  }
  return pts;
}

inline double predicted_exponent(double alpha) { return alpha > 0.5 ? -(1.0 - alpha) : -0.5; }

inline Regime classify_regime(double alpha, const ScalingEstimate& est, double tolerance) {
  if (is_critical(alpha)) return Regime::critical;
  if (std::abs(est.slope - predicted_exponent(alpha)) > tolerance) return Regime::mismatch;
  return alpha < 0.5 ? Regime::gaussian : Regime::deterministic;
}

inline ScalingEstimate annotate(ScalingEstimate est, double alpha, double tolerance) {
  est.regime_predicted = predicted_exponent(alpha);
  const Regime r = classify_regime(alpha, est, tolerance);
  est.regime_match = r == Regime::gaussian || r == Regime::deterministic;
  return est;
}

}  // namespace fluctlab
