#pragma once

// Mean-field limit. The limit measure factorises as nu_t = xi_t (x) dx and the
// coupling [Gamma Psi, nu_t](theta, omega, x) = (2^a/(1-a)) [Gamma, xi_t](theta, omega)
// does not depend on x, so only the density p_t(theta, omega) of xi_t on the
// circle is discretised, with a finite list of disorder atoms.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fluctlab/error.hpp"
#include "fluctlab/lattice.hpp"
#include "fluctlab/model.hpp"
#include "fluctlab/numeric.hpp"

namespace fluctlab {

// Cell-averaged conditional densities p(theta | omega_a) on M uniform cells of [0, 2pi).
struct DensityGrid {
  std::size_t cells = 0;
  std::vector<Atom> atoms;
  std::vector<double> values;  // values[a * cells + j]
  double time = 0.0;

  DensityGrid() = default;
  DensityGrid(std::size_t cell_count, std::vector<Atom> atom_list, double t = 0.0)
      : cells(cell_count), atoms(std::move(atom_list)), values(cells * atoms.size(), 0.0), time(t) {
    if (cells < 4) throw ConfigError("density grid needs at least 4 cells");
    if (atoms.empty()) throw ConfigError("density grid needs at least one disorder atom");
    double total = 0.0;
    for (const auto& a : atoms) total += a.probability;
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("disorder atom probabilities must sum to 1");
  }

  [[nodiscard]] double cell_width() const { return kTwoPi / static_cast<double>(cells); }
  [[nodiscard]] double center(std::size_t j) const { return (static_cast<double>(j) + 0.5) * cell_width(); }
  double& at(std::size_t atom, std::size_t j) { return values[atom * cells + j]; }
  [[nodiscard]] double at(std::size_t atom, std::size_t j) const { return values[atom * cells + j]; }

  [[nodiscard]] double conditional_mass(std::size_t atom) const {
    CompensatedSum acc;
    for (std::size_t j = 0; j < cells; ++j) acc.add(at(atom, j));
    return acc.value() * cell_width();
  }
};

inline DensityGrid uniform_grid(std::size_t cells, std::vector<Atom> atoms) {
  DensityGrid g(cells, std::move(atoms));
  std::fill(g.values.begin(), g.values.end(), 1.0 / kTwoPi);
  return g;
}

// Product law zeta (x) mu at t = 0; cell averages by 64-point Gauss-Legendre.
inline DensityGrid initial_grid(const ModelSpec& model, std::size_t cells) {
  if (model.state_space != StateSpace::circle) throw ConfigError("mean-field solver supports circle models only");
  if (model.disorder.atoms.empty()) throw ConfigError("mean-field solver needs a finite disorder support");
  if (!model.initial.density) throw ConfigError("initial law '" + model.initial.name + "' has no density");
  DensityGrid g(cells, model.disorder.atoms);
  const double w = g.cell_width();
  for (std::size_t j = 0; j < cells; ++j) {
    const double lo = static_cast<double>(j) * w;
    const double avg = gauss_legendre_64(model.initial.density, lo, lo + w) / w;
    for (std::size_t a = 0; a < g.atoms.size(); ++a) g.at(a, j) = avg;
  }
  return g;
}

// <xi, h> = sum_a prob_a sum_j h(theta_j, omega_a) p_aj dtheta (midpoint rule).
template <class H>
double expect_xi(const DensityGrid& grid, H&& h) {
  CompensatedSum acc;
  const double w = grid.cell_width();
  for (std::size_t a = 0; a < grid.atoms.size(); ++a) {
    const double omega = grid.atoms[a].value;
    double row = 0.0;
    for (std::size_t j = 0; j < grid.cells; ++j) row += h(grid.center(j), omega) * grid.at(a, j);
    acc.add(grid.atoms[a].probability * row * w);
  }
  return acc.value();
}

// <nu, f> = int_S <xi, f(., ., x)> dx with a uniform x-rule on `x_nodes` points,
// exact for trigonometric x-dependence of order below x_nodes.
template <class F>
double expect_nu(const DensityGrid& grid, F&& f, std::size_t x_nodes = 64) {
  CompensatedSum acc;
  for (std::size_t q = 0; q < x_nodes; ++q) {
    const double x = static_cast<double>(q) / static_cast<double>(x_nodes);
    acc.add(expect_xi(grid, [&](double theta, double omega) { return f(theta, omega, x); }));
  }
  return acc.value() / static_cast<double>(x_nodes);
}

// The x-independent coupling (theta, omega) -> [Gamma Psi, nu_t].
class CouplingField {
 public:
  CouplingField() : fn_([](double, double) { return 0.0; }) {}
  explicit CouplingField(std::function<double(double, double)> fn) : fn_(std::move(fn)) {}

  static CouplingField constant(double value) {
    return CouplingField([value](double, double) { return value; });
  }

  double operator()(double theta, double omega) const { return fn_(theta, omega); }

 private:
  std::function<double(double, double)> fn_;
};

inline CouplingField coupling_field(const DensityGrid& grid, const ModelSpec& model, double alpha) {
  const double scale = integral_psi(alpha);
  if (model.has_separable()) {
    std::vector<double> moments;
    std::vector<ThetaOmegaFn> left;
    for (const auto& term : model.separable) {
      moments.push_back(scale * expect_xi(grid, term.right));
      left.push_back(term.left);
    }
    return CouplingField([moments = std::move(moments), left = std::move(left)](double theta, double omega) {
      double v = 0.0;
      for (std::size_t r = 0; r < left.size(); ++r) v += left[r](theta, omega) * moments[r];
      return v;
    });
  }
  auto snapshot = std::make_shared<const DensityGrid>(grid);
  return CouplingField([snapshot, gamma = model.gamma, scale](double theta, double omega) {
    return scale * expect_xi(*snapshot, [&](double th_t, double om_t) { return gamma(theta, omega, th_t, om_t); });
  });
}

// Time-indexed limit measure, piecewise constant in time: at time t the
// snapshot with the largest recorded time <= t is used.
class MeanFieldPath {
 public:
  using ExpectFn = std::function<double(double t, const ThetaOmegaFn& h)>;
  using FieldFn = std::function<CouplingField(double t)>;

  MeanFieldPath(double t_end, ExpectFn expect, FieldFn field)
      : t_end_(t_end), expect_(std::move(expect)), field_(std::move(field)) {}

  static MeanFieldPath from_grids(const ModelSpec& model, double alpha, std::vector<DensityGrid> grids) {
    if (grids.empty()) throw ConfigError("mean-field path needs at least one density snapshot");
    auto shared = std::make_shared<std::vector<DensityGrid>>(std::move(grids));
    auto fields = std::make_shared<std::vector<CouplingField>>();
    for (const auto& g : *shared) fields->push_back(coupling_field(g, model, alpha));
    auto index_at = [shared](double t) {
      const auto& gs = *shared;
      auto it = std::upper_bound(gs.begin(), gs.end(), t + 1e-12,
                                 [](double v, const DensityGrid& g) { return v < g.time; });
      return it == gs.begin() ? std::size_t{0} : static_cast<std::size_t>(it - gs.begin() - 1);
    };
    const double end = shared->size() == 1 ? std::numeric_limits<double>::infinity() : shared->back().time;
    return MeanFieldPath(
        end, [shared, index_at](double t, const ThetaOmegaFn& h) { return expect_xi((*shared)[index_at(t)], h); },
        [fields, index_at](double t) { return (*fields)[index_at(t)]; });
  }

  // A single snapshot valid for all times (a stationary solution).
  static MeanFieldPath stationary(const ModelSpec& model, double alpha, DensityGrid grid) {
    std::vector<DensityGrid> one;
    one.push_back(std::move(grid));
    return from_grids(model, alpha, std::move(one));
  }

  [[nodiscard]] double t_end() const { return t_end_; }
  double expect(double t, const ThetaOmegaFn& h) const { return expect_(t, h); }
  [[nodiscard]] CouplingField field(double t) const { return field_(t); }

 private:
  double t_end_;
  ExpectFn expect_;
  FieldFn field_;
};

// Conservative finite-volume step for
//   dp/dt = (sigma^2/2) p'' - (p (c + field))'
// per disorder atom: upwind advective flux plus centred diffusive flux.
// Explicit, positivity preserving when dt <= min(h^2/sigma^2, h/max|v|)/2.
inline void density_step(DensityGrid& grid, const ModelSpec& model, const CouplingField& field, double dt) {
  const std::size_t m = grid.cells;
  const double h = grid.cell_width();
  const double diff = 0.5 * model.noise_sigma * model.noise_sigma;
  std::vector<double> velocity(m);
  std::vector<double> flux(m);  // flux[j] through the face between cell j and j+1
  for (std::size_t a = 0; a < grid.atoms.size(); ++a) {
    const double omega = grid.atoms[a].value;
    double vmax = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double face = (static_cast<double>(j) + 1.0) * h;
      velocity[j] = model.drift(face, omega) + field(face, omega);
      vmax = std::max(vmax, std::abs(velocity[j]));
    }
    double admissible = std::numeric_limits<double>::infinity();
    if (diff > 0.0) admissible = std::min(admissible, 0.5 * h * h / (2.0 * diff));
    if (vmax > 0.0) admissible = std::min(admissible, 0.5 * h / vmax);
    if (dt > admissible * (1.0 + 1e-12)) {
      throw NumericError("CFL violated: dt=" + std::to_string(dt) + " exceeds admissible dt=" +
                         std::to_string(admissible));
    }
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t right = j + 1 == m ? 0 : j + 1;
      const double v = velocity[j];
      const double p_left = grid.at(a, j);
      const double p_right = grid.at(a, right);
      const double advective = v > 0.0 ? v * p_left : v * p_right;
      flux[j] = advective - diff * (p_right - p_left) / h;
    }
    const double ratio = dt / h;
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t left = j == 0 ? m - 1 : j - 1;
      grid.at(a, j) -= ratio * (flux[j] - flux[left]);
    }
  }
  grid.time += dt;
}

struct DensitySolution {
  std::vector<DensityGrid> snapshots;  // starts with grid0
};

// Explicit time stepping, coupling field re-evaluated every step.
// Records every `record_stride` steps and always the final time.
inline DensitySolution solve_density(const ModelSpec& model, double alpha, DensityGrid grid0, double dt,
                                     double t_end, std::size_t record_stride = 1) {
  if (model.state_space != StateSpace::circle) throw ConfigError("mean-field solver supports circle models only");
  if (!(dt > 0.0) || !(t_end > 0.0)) throw ConfigError("solve_density needs dt > 0 and t_end > 0");
  if (record_stride == 0) throw ConfigError("record_stride must be >= 1");
  DensitySolution out;
  out.snapshots.push_back(grid0);
  DensityGrid grid = std::move(grid0);
  const double t0 = grid.time;
  const auto steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
  for (std::size_t n = 1; n <= steps; ++n) {
    const double step = n == steps ? (t0 + t_end) - grid.time : dt;
    density_step(grid, model, coupling_field(grid, model, alpha), step);
    if (n == steps) grid.time = t0 + t_end;
    if (n % record_stride == 0 || n == steps) out.snapshots.push_back(grid);
  }
  return out;
}

}  // namespace fluctlab
