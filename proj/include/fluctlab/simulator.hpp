#pragma once

// Euler-Maruyama integration of the particle system, optionally coupled to
// the nonlinear processes theta_bar_i driven by the same increments, with
// running martingale accumulators.

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fluctlab/convolution.hpp"
#include "fluctlab/error.hpp"
#include "fluctlab/lattice.hpp"
#include "fluctlab/meanfield.hpp"
#include "fluctlab/model.hpp"
#include "fluctlab/numeric.hpp"
#include "fluctlab/rng.hpp"
#include "fluctlab/test_functions.hpp"

namespace fluctlab {

struct SimConfig {
  double dt = 1e-3;
  double t_end = 1.0;
  std::uint64_t seed = 0;
  std::size_t record_stride = 1;
  ConvolutionMethod method = ConvolutionMethod::automatic;

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
    if (!(t_end > 0.0)) throw ConfigError("t_end must be > 0");
    if (dt > t_end) throw ConfigError("dt must not exceed t_end");
    if (record_stride < 1) throw ConfigError("record_stride must be >= 1");
    if (static_cast<double>(record_stride) * dt > t_end * (1.0 + 1e-12)) {
      throw ConfigError("record_stride * dt must not exceed t_end");
    }
  }

  // The last step is shortened so that the run ends exactly at t_end.
  [[nodiscard]] std::size_t steps() const {
    return static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
  }
};

// M^(eta) f accumulated with the plain Euler increment (euler) and with the
// second-order Ito-Taylor correction 1/2 f'' sigma^2 (dB^2 - dt) (strong).
struct EtaMartingale {
  TestFn1 f;
  double euler = 0.0;
  double strong = 0.0;
};

struct HMartingale {
  TestFn2 g;
  double value = 0.0;
};

struct ParticleState {
  double time = 0.0;
  std::shared_ptr<const Lattice> lattice;
  std::vector<double> theta;
  std::vector<double> omega;
  std::optional<std::vector<double>> theta_bar;
  std::map<std::string, EtaMartingale> mart_eta;
  std::map<std::string, HMartingale> mart_h;

  [[nodiscard]] std::size_t size() const { return theta.size(); }
  [[nodiscard]] double a_n() const { return scale_factor(lattice->n_half(), lattice->alpha()); }

  void track(const TestFn1& f) { mart_eta.try_emplace(f.id, EtaMartingale{f}); }
  void track(const TestFn2& g) {
    if (!g.separable()) throw ConfigError("H-martingale tracking needs a separable g");
    mart_h.try_emplace(g.id(), HMartingale{g});
  }

  [[nodiscard]] const EtaMartingale& eta_martingale(const std::string& id) const {
    auto it = mart_eta.find(id);
    if (it == mart_eta.end()) throw ConfigError("no martingale accumulator for '" + id + "'");
    return it->second;
  }

  void validate() const {
    if (!lattice) throw ConfigError("particle state has no lattice");
    if (theta.size() != lattice->size() || omega.size() != lattice->size()) {
      throw ConfigError("particle arrays must have length " + std::to_string(lattice->size()));
    }
    if (theta_bar && theta_bar->size() != lattice->size()) throw ConfigError("theta_bar has wrong length");
  }
};

inline ParticleState make_state(std::shared_ptr<const Lattice> lattice, std::vector<double> theta,
                                std::vector<double> omega) {
  ParticleState s;
  s.lattice = std::move(lattice);
  s.theta = std::move(theta);
  s.omega = std::move(omega);
  s.validate();
  return s;
}

// Initial populations use stream 1 of the seed, the noise uses stream 2.
inline ParticleState initial_state(const ModelSpec& model, std::shared_ptr<const Lattice> lattice,
                                   std::uint64_t seed) {
  Engine eng(derive_seed(seed, 1));
  auto pops = sample_populations(model, lattice->size(), eng);
  return make_state(std::move(lattice), std::move(pops.thetas), std::move(pops.omegas));
}

// Evaluates [Gamma Psi, nu_N] at every site. Owns the FFT plans, so one
// instance per worker.
class InteractionEngine {
 public:
  InteractionEngine(const ModelSpec& model, std::shared_ptr<const Lattice> lattice,
                    ConvolutionMethod method = ConvolutionMethod::automatic)
      : model_(&model), lattice_(std::move(lattice)), op_(lattice_->kernel()) {
    if (method == ConvolutionMethod::fast && !model.has_separable()) {
      throw ConfigError("fast interaction requires a separable interaction");
    }
    use_fast_ = model.has_separable() && method != ConvolutionMethod::direct;
    signal_.resize(lattice_->size());
    conv_.resize(lattice_->size());
  }

  [[nodiscard]] bool fast() const { return use_fast_; }
  [[nodiscard]] const Lattice& lattice() const { return *lattice_; }

  void field(std::span<const double> theta, std::span<const double> omega, std::span<double> out) {
    const std::size_t n = lattice_->size();
    const double inv = 1.0 / static_cast<double>(n);
    if (!use_fast_) {
      const auto& kernel = lattice_->kernel();
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          const std::size_t k = i >= j ? i - j : j - i;
          acc += model_->gamma(theta[i], omega[i], theta[j], omega[j]) * kernel[k];
        }
        out[i] = acc * inv;
      }
      return;
    }
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& term : model_->separable) {
      for (std::size_t j = 0; j < n; ++j) signal_[j] = term.right(theta[j], omega[j]);
      op_.apply(signal_, conv_, ConvolutionMethod::fast);
      for (std::size_t i = 0; i < n; ++i) out[i] += term.left(theta[i], omega[i]) * conv_[i] * inv;
    }
  }

  // out = Psi * signal (unnormalised circular convolution).
  void convolve(std::span<const double> signal, std::span<double> out) {
    op_.apply(signal, out, ConvolutionMethod::fast);
  }

 private:
  const ModelSpec* model_;
  std::shared_ptr<const Lattice> lattice_;
  CirculantOperator op_;
  bool use_fast_ = false;
  std::vector<double> signal_;
  std::vector<double> conv_;
};

inline std::vector<double> interaction_field(const ParticleState& state, const ModelSpec& model,
                                             ConvolutionMethod method = ConvolutionMethod::automatic) {
  state.validate();
  InteractionEngine engine(model, state.lattice, method);
  std::vector<double> out(state.size());
  engine.field(state.theta, state.omega, out);
  return out;
}

// One explicit step with injected standard normals. The nonlinear copies, if
// present, use the same normals and the coupling field of `path` at the
// current time.
inline void em_step(ParticleState& state, const ModelSpec& model, InteractionEngine& engine, double dt,
                    std::span<const double> normals, const MeanFieldPath* path = nullptr) {
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  const std::size_t n = state.size();
  if (normals.size() != n) throw ConfigError("normal array has wrong length");
  const double sigma = model.noise_sigma;
  const double sqdt = std::sqrt(dt);
  const double inv = 1.0 / static_cast<double>(n);
  const auto& pos = state.lattice->positions();

  std::vector<double> field(n);
  engine.field(state.theta, state.omega, field);

  if (!state.mart_eta.empty()) {
    const double scale = state.a_n() * inv;
    for (auto& [id, acc] : state.mart_eta) {
      CompensatedSum euler;
      CompensatedSum correction;
      for (std::size_t i = 0; i < n; ++i) {
        const double db = sqdt * normals[i];
        euler.add(acc.f.grad(state.theta[i], state.omega[i], pos[i]) * sigma * db);
        correction.add(0.5 * acc.f.laplacian(state.theta[i], state.omega[i], pos[i]) * sigma * sigma *
                       (db * db - dt));
      }
      acc.euler += scale * euler.value();
      acc.strong += scale * (euler.value() + correction.value());
    }
  }

  if (!state.mart_h.empty()) {
    if (path == nullptr) throw ConfigError("H-martingale tracking needs a mean-field path");
    const double a_n = state.a_n();
    std::vector<double> sig(n), conv(n);
    for (auto& [id, acc] : state.mart_h) {
      const TestFn1& f1 = acc.g.left();
      const TestFn1& f2 = acc.g.right();
      for (std::size_t i = 0; i < n; ++i) sig[i] = f1.value(state.theta[i], state.omega[i], pos[i]);
      engine.convolve(sig, conv);
      CompensatedSum first;
      for (std::size_t j = 0; j < n; ++j) {
        first.add(f2.grad(state.theta[j], state.omega[j], pos[j]) * sigma * sqdt * normals[j] * conv[j]);
      }
      for (std::size_t i = 0; i < n; ++i) sig[i] = f2.value(state.theta[i], state.omega[i], pos[i]);
      engine.convolve(sig, conv);
      const double m2 = path->expect(state.time, [&](double th, double om) { return f2.theta_omega(th, om); });
      CompensatedSum second;
      for (std::size_t i = 0; i < n; ++i) {
        const double limit = m2 * psi_average(f2.x, state.lattice->alpha(), pos[i]);
        second.add(f1.grad(state.theta[i], state.omega[i], pos[i]) * sigma * sqdt * normals[i] *
                   (conv[i] * inv - limit));
      }
      acc.value += a_n * inv * (inv * first.value() + second.value());
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const double drift = model.drift(state.theta[i], state.omega[i]) + field[i];
    state.theta[i] = reduce_state(model, state.theta[i] + drift * dt + sigma * sqdt * normals[i]);
  }
  if (state.theta_bar) {
    if (path == nullptr) throw ConfigError("nonlinear copies need a mean-field path");
    const CouplingField bar_field = path->field(state.time);
    auto& bar = *state.theta_bar;
    for (std::size_t i = 0; i < n; ++i) {
      const double drift = model.drift(bar[i], state.omega[i]) + bar_field(bar[i], state.omega[i]);
      bar[i] = reduce_state(model, bar[i] + drift * dt + sigma * sqdt * normals[i]);
    }
  }
  state.time += dt;
}

inline void em_step(ParticleState& state, const ModelSpec& model, InteractionEngine& engine, double dt,
                    NormalSource& rng, const MeanFieldPath* path = nullptr) {
  std::vector<double> normals(state.size());
  rng.fill(normals);
  em_step(state, model, engine, dt, normals, path);
}

// ---- observables and trajectories ----------------------------------------

struct Observable {
  std::string id;
  std::function<double(const ParticleState&)> eval;
  std::optional<TestFn1> tracks;  // martingale observables register an accumulator
};

// <nu_N, f>
inline double empirical_mean(const ParticleState& state, const TestFn1& f) {
  const auto& pos = state.lattice->positions();
  CompensatedSum acc;
  for (std::size_t i = 0; i < state.size(); ++i) acc.add(f.value(state.theta[i], state.omega[i], pos[i]));
  return acc.value() / static_cast<double>(state.size());
}

// |(1/|Lambda|) sum_i exp(i theta_i)|
inline double order_parameter(const ParticleState& state) {
  CompensatedSum re;
  CompensatedSum im;
  for (double t : state.theta) {
    re.add(std::cos(t));
    im.add(std::sin(t));
  }
  return std::abs(std::complex<double>(re.value(), im.value())) / static_cast<double>(state.size());
}

inline Observable mean_observable(const TestFn1& f) {
  return {"mean:" + f.id, [f](const ParticleState& s) { return empirical_mean(s, f); }, std::nullopt};
}

inline Observable order_observable() {
  return {"order", [](const ParticleState& s) { return order_parameter(s); }, std::nullopt};
}

inline Observable martingale_observable(const TestFn1& f) {
  return {"mart:" + f.id, [id = f.id](const ParticleState& s) { return s.eta_martingale(id).euler; }, f};
}

inline Observable parse_observable(const std::string& text) {
  if (text == "order") return order_observable();
  if (text.rfind("mart:", 0) == 0) return martingale_observable(parse_test_fn(text.substr(5)));
  if (text.rfind("mean:", 0) == 0) return mean_observable(parse_test_fn(text.substr(5)));
  return mean_observable(parse_test_fn(text));
}

struct Record {
  double time = 0.0;
  std::string id;
  double value = 0.0;
};

struct Trajectory {
  std::vector<Record> records;
  ParticleState final_state;
};

// Called with the state after `step` steps, starting at step 0.
using StepObserver = std::function<void(const ParticleState&, std::size_t step)>;

// Core loop shared by simulate and simulate_coupled.
inline ParticleState run_steps(const ModelSpec& model, const SimConfig& config, ParticleState state,
                               const StepObserver& observer, const MeanFieldPath* path = nullptr) {
  config.validate();
  state.validate();
  InteractionEngine engine(model, state.lattice, config.method);
  NormalSource noise(derive_seed(config.seed, 2));
  std::vector<double> normals(state.size());
  const double t0 = state.time;
  const std::size_t steps = config.steps();
  if (observer) observer(state, 0);
  for (std::size_t n = 1; n <= steps; ++n) {
    const double dt = n == steps ? (t0 + config.t_end) - state.time : config.dt;
    noise.fill(normals);
    em_step(state, model, engine, dt, normals, path);
    if (n == steps) state.time = t0 + config.t_end;
    if (observer) observer(state, n);
  }
  return state;
}

inline Trajectory simulate(const ModelSpec& model, std::shared_ptr<const Lattice> lattice, const SimConfig& config,
                           const std::vector<Observable>& observables,
                           std::optional<ParticleState> init = std::nullopt) {
  config.validate();
  ParticleState state = init ? std::move(*init) : initial_state(model, lattice, config.seed);
  if (state.lattice != lattice) state.lattice = lattice;
  for (const auto& obs : observables) {
    if (obs.tracks) state.track(*obs.tracks);
  }
  Trajectory out;
  const std::size_t steps = config.steps();
  auto observer = [&](const ParticleState& s, std::size_t n) {
    if (n % config.record_stride != 0 && n != steps) return;
    for (const auto& obs : observables) out.records.push_back({s.time, obs.id, obs.eval(s)});
  };
  out.final_state = run_steps(model, config, std::move(state), observer);
  return out;
}

// max_i |theta_i - theta_bar_i|, circle distance on the circle.
inline double coupling_error(const ParticleState& state, const ModelSpec& model) {
  if (!state.theta_bar) throw ConfigError("state has no nonlinear copies");
  double worst = 0.0;
  const auto& bar = *state.theta_bar;
  for (std::size_t i = 0; i < state.size(); ++i) {
    double d = std::abs(state.theta[i] - bar[i]);
    if (model.state_space == StateSpace::circle) d = std::min(d, kTwoPi - d);
    worst = std::max(worst, d);
  }
  return worst;
}

struct CoupledTrajectory {
  std::vector<double> times;
  std::vector<double> error;
  std::vector<double> running_sup;
  ParticleState final_state;
};

inline CoupledTrajectory simulate_coupled(const ModelSpec& model, std::shared_ptr<const Lattice> lattice,
                                          const SimConfig& config, const MeanFieldPath& path,
                                          std::optional<ParticleState> init = std::nullopt,
                                          const StepObserver& extra = {}) {
  config.validate();
  if (path.t_end() < config.t_end * (1.0 - 1e-12)) {
    throw ConfigError("mean-field path ends at t=" + std::to_string(path.t_end()) + " before t_end=" +
                      std::to_string(config.t_end));
  }
  ParticleState state = init ? std::move(*init) : initial_state(model, lattice, config.seed);
  if (state.lattice != lattice) state.lattice = lattice;
  state.theta_bar = state.theta;
  CoupledTrajectory out;
  const std::size_t steps = config.steps();
  double sup = 0.0;
  auto observer = [&](const ParticleState& s, std::size_t n) {
    const double e = coupling_error(s, model);
    sup = std::max(sup, e);
    if (n % config.record_stride == 0 || n == steps) {
      out.times.push_back(s.time);
      out.error.push_back(e);
      out.running_sup.push_back(sup);
    }
    if (extra) extra(s, n);
  };
  out.final_state = run_steps(model, config, std::move(state), observer, &path);
  return out;
}

}  // namespace fluctlab
