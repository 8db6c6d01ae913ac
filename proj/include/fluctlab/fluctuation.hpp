#pragma once

// Fluctuation fields of the empirical measure:
//
//   <eta_N, f> = a_N ( <nu_N, f> - <nu, f> )
//   <H_N, g>   = a_N ( |Lambda|^-2 sum_{i,j} Psi(x_i, x_j) g(tau_i, tau_j)
//                      - |Lambda|^-1 sum_i int Psi(x_i, x~) g(tau_i, tau~) nu(dtau~) )
//
// The limit nu = xi (x) dx is supplied as a MeanFieldPath evaluated at the
// state's time.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fluctlab/convolution.hpp"
#include "fluctlab/error.hpp"
#include "fluctlab/lattice.hpp"
#include "fluctlab/meanfield.hpp"
#include "fluctlab/model.hpp"
#include "fluctlab/numeric.hpp"
#include "fluctlab/simulator.hpp"
#include "fluctlab/test_functions.hpp"

namespace fluctlab {

// A limit given only through its xi-expectations, frozen at the grid's time.
inline MeanFieldPath limit_of(const DensityGrid& grid) {
  auto snapshot = std::make_shared<const DensityGrid>(grid);
  return MeanFieldPath(
      std::numeric_limits<double>::infinity(),
      [snapshot](double, const ThetaOmegaFn& h) { return expect_xi(*snapshot, h); },
      [](double) -> CouplingField { throw ConfigError("this limit carries no coupling field"); });
}

// Deterministic limit xi_t = delta_{theta0 + v t} (x) delta_{omega0} on the line or circle,
// e.g. the noiseless probe model with a Dirac initial law.
inline MeanFieldPath translating_dirac_path(double theta0, double velocity, double omega0 = 0.0,
                                            double t_end = std::numeric_limits<double>::infinity()) {
  return MeanFieldPath(
      t_end, [=](double t, const ThetaOmegaFn& h) { return h(theta0 + velocity * t, omega0); },
      [velocity](double) { return CouplingField::constant(velocity); });
}

namespace detail {

inline double expect_theta_omega(const MeanFieldPath& limit, double t, const TestFn1& f) {
  return limit.expect(t, [&](double th, double om) { return f.theta_omega(th, om); });
}

// int_S h(x) dx by a uniform rule, exact for trigonometric polynomials below `nodes`.
template <class H>
double x_integral(H&& h, std::size_t nodes = 512) {
  CompensatedSum acc;
  for (std::size_t q = 0; q < nodes; ++q) acc.add(h(static_cast<double>(q) / static_cast<double>(nodes)));
  return acc.value() / static_cast<double>(nodes);
}

}  // namespace detail

inline void check_time(const ParticleState& state, const DensityGrid& grid) {
  if (std::abs(state.time - grid.time) > 1e-9) {
    throw ConfigError("density grid time " + std::to_string(grid.time) + " != state time " +
                      std::to_string(state.time));
  }
}

// <nu_t, f>
inline double expect_nu(const MeanFieldPath& limit, double t, const TestFn1& f) {
  const double xs = f.x.integral();
  return xs == 0.0 ? 0.0 : xs * detail::expect_theta_omega(limit, t, f);
}

inline double eta_pair(const ParticleState& state, const MeanFieldPath& limit, const TestFn1& f) {
  return state.a_n() * (empirical_mean(state, f) - expect_nu(limit, state.time, f));
}

inline double eta_pair(const ParticleState& state, const DensityGrid& grid, const TestFn1& f) {
  check_time(state, grid);
  return eta_pair(state, limit_of(grid), f);
}

// |Lambda|^-2 sum_{i,j} Psi_ij g(tau_i, tau_j)
inline double pair_sum(const ParticleState& state, const TestFn2& g, ConvolutionMethod method) {
  const std::size_t n = state.size();
  const auto& pos = state.lattice->positions();
  const double inv = 1.0 / static_cast<double>(n);
  if (method == ConvolutionMethod::fast && !g.separable()) {
    throw ConfigError("fast pair sum requires a separable g");
  }
  if (method != ConvolutionMethod::direct && g.separable()) {
    std::vector<double> right(n), conv(n);
    for (std::size_t j = 0; j < n; ++j) right[j] = g.right().value(state.theta[j], state.omega[j], pos[j]);
    CirculantOperator op(state.lattice->kernel());
    op.apply(right, conv, ConvolutionMethod::fast);
    CompensatedSum acc;
    for (std::size_t i = 0; i < n; ++i) acc.add(g.left().value(state.theta[i], state.omega[i], pos[i]) * conv[i]);
    return acc.value() * inv * inv;
  }
  const auto& kernel = state.lattice->kernel();
  CompensatedSum acc;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const std::size_t k = i >= j ? i - j : j - i;
      row += kernel[k] * g.value(state.theta[i], state.omega[i], pos[i], state.theta[j], state.omega[j], pos[j]);
    }
    acc.add(row);
  }
  return acc.value() * inv * inv;
}

// |Lambda|^-1 sum_i int Psi(x_i, x~) g(tau_i, tau~) nu_t(dtau~)
inline double pair_limit_term(const ParticleState& state, const MeanFieldPath& limit, const TestFn2& g) {
  const std::size_t n = state.size();
  const auto& pos = state.lattice->positions();
  const double alpha = state.lattice->alpha();
  CompensatedSum acc;
  if (g.separable()) {
    const double m2 = detail::expect_theta_omega(limit, state.time, g.right());
    for (std::size_t i = 0; i < n; ++i) {
      acc.add(g.left().value(state.theta[i], state.omega[i], pos[i]) * psi_average(g.right().x, alpha, pos[i]));
    }
    return m2 * acc.value() / static_cast<double>(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double th = state.theta[i];
    const double om = state.omega[i];
    const double x = pos[i];
    acc.add(psi_weighted_integral(alpha, x, [&](double xt) {
      return limit.expect(state.time, [&](double tht, double omt) { return g.value(th, om, x, tht, omt, xt); });
    }, 1e-11));
  }
  return acc.value() / static_cast<double>(n);
}

inline double h_pair(const ParticleState& state, const MeanFieldPath& limit, const TestFn2& g,
                     ConvolutionMethod method = ConvolutionMethod::automatic) {
  return state.a_n() * (pair_sum(state, g, method) - pair_limit_term(state, limit, g));
}

inline double h_pair(const ParticleState& state, const DensityGrid& grid, const TestFn2& g,
                     ConvolutionMethod method = ConvolutionMethod::automatic) {
  check_time(state, grid);
  return h_pair(state, limit_of(grid), g, method);
}

struct DualityReport {
  double lhs = 0.0;  // <H_N, g>
  double rhs = 0.0;  // <eta_N, G_N>
  double gap = 0.0;
  double relative = 0.0;
};

// <H_N, g> against <eta_N, G_N> with G_N(tau~) = |Lambda|^-1 sum_i Psi(x_i, x~) g(tau_i, tau~).
// The right side sums over the evaluation point first, and integrates the
// Psi-average by quadrature in x rather than by the Fourier closed form.
inline DualityReport duality_report(const ParticleState& state, const MeanFieldPath& limit, const TestFn2& g) {
  DualityReport r;
  // For a callable g both sides share the same limit term; evaluate it once.
  const std::optional<double> shared_limit =
      g.separable() ? std::nullopt : std::optional<double>(pair_limit_term(state, limit, g));
  r.lhs = shared_limit ? state.a_n() * (pair_sum(state, g, ConvolutionMethod::direct) - *shared_limit)
                       : h_pair(state, limit, g, ConvolutionMethod::direct);

  const std::size_t n = state.size();
  const auto& pos = state.lattice->positions();
  const double alpha = state.lattice->alpha();
  const double inv = 1.0 / static_cast<double>(n);
  CompensatedSum empirical;  // <nu_N, G_N>
  for (std::size_t k = 0; k < n; ++k) {
    double gk = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == k) continue;
      gk += state.lattice->weight(i, k) *
            g.value(state.theta[i], state.omega[i], pos[i], state.theta[k], state.omega[k], pos[k]);
    }
    empirical.add(gk * inv);
  }
  CompensatedSum limit_part;  // <nu, G_N>
  if (g.separable()) {
    const double m2 = detail::expect_theta_omega(limit, state.time, g.right());
    const XPart& xp = g.right().x;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = psi_weighted_integral(alpha, pos[i], [&](double xt) { return xp.value(xt); });
      limit_part.add(g.left().value(state.theta[i], state.omega[i], pos[i]) * w);
    }
    r.rhs = state.a_n() * (empirical.value() * inv - m2 * limit_part.value() * inv);
  } else {
    r.rhs = state.a_n() * (empirical.value() * inv - *shared_limit);
  }
  r.gap = std::abs(r.lhs - r.rhs);
  r.relative = r.gap / std::max({std::abs(r.lhs), std::abs(r.rhs), 1e-300});
  return r;
}

inline double duality_gap(const ParticleState& state, const MeanFieldPath& limit, const TestFn2& g) {
  return duality_report(state, limit, g).gap;
}

inline double duality_gap(const ParticleState& state, const DensityGrid& grid, const TestFn2& g) {
  check_time(state, grid);
  return duality_gap(state, limit_of(grid), g);
}

// ---- limits at t = 0 -------------------------------------------------------

using Matrix = std::vector<std::vector<double>>;

struct LimitInitReport {
  double alpha = 0.0;
  bool deterministic = false;  // alpha > 1/2
  Matrix c_eta;                // f x f
  Matrix c_eta_h;              // f x g
  Matrix c_h;                  // g x g
  std::vector<double> h0;      // alpha > 1/2: <H_0, g>
};

namespace detail {

// [g Psi, nu]_2(theta~, omega~, x~) = m1 * psi_average(g1.x)(x~) * g2(theta~, omega~, x~) for g = g1 (x) g2.
struct PsiTransform {
  double m1 = 0.0;
  XPart left_x;
  TestFn1 right;

  [[nodiscard]] double x_factor(double alpha, double x) const {
    return m1 * psi_average(left_x, alpha, x) * right.x.value(x);
  }
};

inline PsiTransform psi_transform(const TestFn2& g, const DensityGrid& grid) {
  if (!g.separable()) throw ConfigError("limit covariances need a separable g");
  PsiTransform t;
  t.m1 = expect_xi(grid, [&](double th, double om) { return g.left().theta_omega(th, om); });
  t.left_x = g.left().x;
  t.right = g.right();
  return t;
}

// <a b, xi> - <a, xi><b, xi> on theta-omega parts
template <class A, class B>
double xi_covariance(const DensityGrid& grid, A&& a, B&& b) {
  const double ab = expect_xi(grid, [&](double th, double om) { return a(th, om) * b(th, om); });
  return ab - expect_xi(grid, a) * expect_xi(grid, b);
}

}  // namespace detail

inline LimitInitReport limit_init_stats(const std::vector<TestFn1>& fs, const std::vector<TestFn2>& gs,
                                        const DensityGrid& grid0, double alpha, double chi_tolerance = 1e-9) {
  check_alpha(alpha);
  if (is_critical(alpha)) throw ConfigError("limit laws at alpha = 1/2 are not available");
  LimitInitReport r;
  r.alpha = alpha;
  const std::size_t nf = fs.size();
  const std::size_t ng = gs.size();
  r.c_eta.assign(nf, std::vector<double>(nf, 0.0));
  r.c_eta_h.assign(nf, std::vector<double>(ng, 0.0));
  r.c_h.assign(ng, std::vector<double>(ng, 0.0));

  if (alpha > 0.5) {
    r.deterministic = true;
    const double chi = chi_alpha(alpha, chi_tolerance);
    for (const auto& g : gs) {
      double inner = 0.0;
      if (g.separable()) {
        const double a = expect_xi(grid0, [&](double th, double om) { return g.left().theta_omega(th, om); });
        const double b = expect_xi(grid0, [&](double th, double om) { return g.right().theta_omega(th, om); });
        inner = a * b * detail::x_integral([&](double x) { return g.left().x.value(x) * g.right().x.value(x); });
      } else {
        inner = detail::x_integral(
            [&](double x) {
              return expect_xi(grid0, [&](double th, double om) {
                return expect_xi(grid0, [&](double tht, double omt) { return g.value(th, om, x, tht, omt, x); });
              });
            },
            64);
      }
      r.h0.push_back(chi * inner);
    }
    return r;
  }

  for (std::size_t a = 0; a < nf; ++a) {
    for (std::size_t b = a; b < nf; ++b) {
      const double cov = detail::xi_covariance(
          grid0, [&](double th, double om) { return fs[a].theta_omega(th, om); },
          [&](double th, double om) { return fs[b].theta_omega(th, om); });
      const double xs = detail::x_integral([&](double x) { return fs[a].x.value(x) * fs[b].x.value(x); });
      r.c_eta[a][b] = r.c_eta[b][a] = 0.5 * cov * xs;
    }
  }
  std::vector<detail::PsiTransform> ts;
  for (const auto& g : gs) ts.push_back(detail::psi_transform(g, grid0));
  for (std::size_t a = 0; a < nf; ++a) {
    for (std::size_t b = 0; b < ng; ++b) {
      const auto& t = ts[b];
      const double cov = detail::xi_covariance(
          grid0, [&](double th, double om) { return fs[a].theta_omega(th, om); },
          [&](double th, double om) { return t.right.theta_omega(th, om); });
      const double xs = detail::x_integral([&](double x) { return fs[a].x.value(x) * t.x_factor(alpha, x); });
      r.c_eta_h[a][b] = 0.5 * cov * xs;
    }
  }
  for (std::size_t a = 0; a < ng; ++a) {
    for (std::size_t b = a; b < ng; ++b) {
      const double cov = detail::xi_covariance(
          grid0, [&](double th, double om) { return ts[a].right.theta_omega(th, om); },
          [&](double th, double om) { return ts[b].right.theta_omega(th, om); });
      const double xs =
          detail::x_integral([&](double x) { return ts[a].x_factor(alpha, x) * ts[b].x_factor(alpha, x); });
      r.c_h[a][b] = r.c_h[b][a] = 0.5 * cov * xs;
    }
  }
  return r;
}

// ---- martingale covariances --------------------------------------------------

struct MartingaleCov {
  double k_eta = 0.0;                 // K^(eta)_{t,t}(f1, f2)
  std::optional<double> k_eta_h;      // K^(eta,H)_{t,t}(f1, g)
  std::optional<double> k_h;          // K^(H)_{t,t}(g, g)
};

namespace detail {

// Trapezoid in time over the snapshots up to t; a single snapshot is stationary.
template <class F>
double time_integral(const std::vector<DensityGrid>& snapshots, double t, F&& integrand) {
  if (snapshots.empty()) throw ConfigError("density path is empty");
  if (snapshots.size() == 1) return t * integrand(snapshots.front());
  if (snapshots.back().time < t - 1e-9) throw ConfigError("density path does not cover [0, t]");
  CompensatedSum acc;
  double prev_t = snapshots.front().time;
  double prev_v = integrand(snapshots.front());
  for (std::size_t k = 1; k < snapshots.size() && prev_t < t - 1e-15; ++k) {
    const double tk = std::min(snapshots[k].time, t);
    double vk = integrand(snapshots[k]);
    if (snapshots[k].time > t) {  // linear interpolation to the end point
      const double w = (t - prev_t) / (snapshots[k].time - prev_t);
      vk = prev_v + w * (vk - prev_v);
    }
    acc.add(0.5 * (tk - prev_t) * (prev_v + vk));
    prev_t = tk;
    prev_v = vk;
  }
  return acc.value();
}

}  // namespace detail

// Limit covariances with the noise intensity sigma^2 made explicit:
//   K^(eta)   = 1/2 sigma^2 int_0^t <d f1 d f2, nu_u> du
//   K^(eta,H) = 1/2 sigma^2 int_0^t <d f [(d~ g) Psi, nu_u]_2, nu_u> du
//   K^(H)     = 1/2 sigma^2 int_0^t <[(d~ g) Psi, nu_u]_2^2, nu_u> du
inline MartingaleCov martingale_cov(const TestFn1& f1, const TestFn1& f2, const std::optional<TestFn2>& g,
                                    double t, const std::vector<DensityGrid>& density_path, double alpha,
                                    double sigma) {
  check_alpha(alpha);
  MartingaleCov out;
  const double s2 = 0.5 * sigma * sigma;
  const double xs = detail::x_integral([&](double x) { return f1.x.value(x) * f2.x.value(x); });
  auto d_theta_omega = [](const TestFn1& f) {
    return [&f](double th, double om) { return f.theta.d1(th) * f.omega.value(om); };
  };
  out.k_eta = s2 * xs * detail::time_integral(density_path, t, [&](const DensityGrid& grid) {
    auto a = d_theta_omega(f1);
    auto b = d_theta_omega(f2);
    return expect_xi(grid, [&](double th, double om) { return a(th, om) * b(th, om); });
  });
  if (!g) return out;
  if (!g->separable()) throw ConfigError("martingale covariances need a separable g");
  const TestFn1& g1 = g->left();
  const TestFn1& g2 = g->right();
  auto dg2 = d_theta_omega(g2);
  auto df1 = d_theta_omega(f1);
  const double x_eta_h = detail::x_integral(
      [&](double x) { return f1.x.value(x) * g2.x.value(x) * psi_average(g1.x, alpha, x); });
  const double x_h = detail::x_integral([&](double x) {
    const double v = g2.x.value(x) * psi_average(g1.x, alpha, x);
    return v * v;
  });
  out.k_eta_h = s2 * x_eta_h * detail::time_integral(density_path, t, [&](const DensityGrid& grid) {
    const double m1 = expect_xi(grid, [&](double th, double om) { return g1.theta_omega(th, om); });
    return m1 * expect_xi(grid, [&](double th, double om) { return df1(th, om) * dg2(th, om); });
  });
  out.k_h = s2 * x_h * detail::time_integral(density_path, t, [&](const DensityGrid& grid) {
    const double m1 = expect_xi(grid, [&](double th, double om) { return g1.theta_omega(th, om); });
    return m1 * m1 * expect_xi(grid, [&](double th, double om) { return dg2(th, om) * dg2(th, om); });
  });
  return out;
}

// Expected bracket of M^(eta)_N f at finite N under the limit law:
//   (a_N^2 / |Lambda|) sigma^2 int_0^t <(d f)^2, nu_u> du,
// which equals K^(eta)_{t,t}(f, f) exactly when alpha < 1/2.
inline double finite_martingale_variance(std::int64_t n_half, double alpha, double sigma, const TestFn1& f,
                                         double t, const std::vector<DensityGrid>& density_path) {
  const double a_n = scale_factor(n_half, alpha);
  const double factor = a_n * a_n / static_cast<double>(2 * n_half);
  return factor * 2.0 * martingale_cov(f, f, std::nullopt, t, density_path, alpha, sigma).k_eta;
}

// ---- semimartingale residual ---------------------------------------------------

struct ResidualSeries {
  std::vector<double> times;
  std::vector<double> residual;        // with the Ito-Taylor corrected martingale
  std::vector<double> residual_euler;  // with the plain Euler martingale
};

// Tracks r(t) = <eta_t, f> - <eta_0, f> - int <eta_s, L[nu_s] f> ds - int <H_s, Phi[f]> ds - M_t f
// along a run, time integrals by the left endpoint rule on the step grid.
// Use as the StepObserver of run_steps; f must be tracked by the state.
//
//   L[nu_s] f = sigma^2/2 f'' + f' (c + [Gamma Psi, nu_s])
//   <H_s, Phi[f]> = a_N |Lambda|^-1 sum_i f'(tau_i) ([Gamma Psi, nu_N](tau_i) - [Gamma Psi, nu_s](theta_i, omega_i))
class SemimartingaleTracker {
 public:
  SemimartingaleTracker(const ModelSpec& model, std::shared_ptr<const Lattice> lattice, MeanFieldPath limit,
                        TestFn1 f, ConvolutionMethod method = ConvolutionMethod::automatic)
      : model_(&model), limit_(std::move(limit)), f_(std::move(f)), engine_(model, lattice, method),
        field_(lattice->size()) {}

  void operator()(const ParticleState& state, std::size_t /*step*/) {
    auto it = state.mart_eta.find(f_.id);
    if (it == state.mart_eta.end()) throw ConfigError("missing martingale accumulator for '" + f_.id + "'");
    const double eta = eta_pair(state, limit_, f_);
    if (series_.times.empty()) {
      eta0_ = eta;
    } else {
      const double dt = state.time - last_time_;
      drift_integral_ += last_integrand_ * dt;
    }
    const double base = eta - eta0_ - drift_integral_;
    series_.times.push_back(state.time);
    series_.residual.push_back(base - it->second.strong);
    series_.residual_euler.push_back(base - it->second.euler);
    last_time_ = state.time;
    last_integrand_ = integrand(state);
  }

  [[nodiscard]] const ResidualSeries& series() const { return series_; }

 private:
  // <eta_s, L[nu_s] f> + <H_s, Phi[f]>
  double integrand(const ParticleState& state) {
    const double t = state.time;
    const auto& pos = state.lattice->positions();
    const std::size_t n = state.size();
    const double sigma2 = model_->noise_sigma * model_->noise_sigma;
    const CouplingField lim = limit_.field(t);
    engine_.field(state.theta, state.omega, field_);
    CompensatedSum generator;
    CompensatedSum coupling;
    for (std::size_t i = 0; i < n; ++i) {
      const double th = state.theta[i];
      const double om = state.omega[i];
      const double lf = lim(th, om);
      const double d1 = f_.grad(th, om, pos[i]);
      generator.add(0.5 * sigma2 * f_.laplacian(th, om, pos[i]) + d1 * (model_->drift(th, om) + lf));
      coupling.add(d1 * (field_[i] - lf));
    }
    const double xs = f_.x.integral();
    double limit_generator = 0.0;
    if (xs != 0.0) {
      limit_generator = xs * limit_.expect(t, [&](double th, double om) {
        return 0.5 * sigma2 * f_.theta.d2(th) * f_.omega.value(om) +
               f_.theta.d1(th) * f_.omega.value(om) * (model_->drift(th, om) + lim(th, om));
      });
    }
    const double inv = 1.0 / static_cast<double>(n);
    const double a_n = state.a_n();
    return a_n * (generator.value() * inv - limit_generator) + a_n * coupling.value() * inv;
  }

  const ModelSpec* model_;
  MeanFieldPath limit_;
  TestFn1 f_;
  InteractionEngine engine_;
  std::vector<double> field_;
  ResidualSeries series_;
  double eta0_ = 0.0;
  double drift_integral_ = 0.0;
  double last_time_ = 0.0;
  double last_integrand_ = 0.0;
};

// Runs the particle system from `init` (or a fresh sample) and returns r(t).
inline ResidualSeries semimartingale_residual(const ModelSpec& model, std::shared_ptr<const Lattice> lattice,
                                              const SimConfig& config, const MeanFieldPath& limit,
                                              const TestFn1& f, std::optional<ParticleState> init = std::nullopt) {
  ParticleState state = init ? std::move(*init) : initial_state(model, lattice, config.seed);
  if (state.lattice != lattice) state.lattice = lattice;
  state.track(f);
  SemimartingaleTracker tracker(model, lattice, limit, f, config.method);
  run_steps(model, config, std::move(state), std::ref(tracker), &limit);
  return tracker.series();
}

}  // namespace fluctlab
