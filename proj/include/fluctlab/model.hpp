#pragma once

// Dynamics ingredients for scalar state theta and scalar disorder omega:
//
//   d theta_i = [ c(theta_i, omega_i) + (1/|Lambda|) sum_j Gamma(theta_i, omega_i, theta_j, omega_j) Psi(x_i, x_j) ] dt
//               + sigma dB_i
//
// with i.i.d. initial angles ~ zeta and i.i.d. disorder ~ mu.

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fluctlab/error.hpp"
#include "fluctlab/numeric.hpp"
#include "fluctlab/rng.hpp"

namespace fluctlab {

enum class StateSpace { circle, line };

using ThetaOmegaFn = std::function<double(double theta, double omega)>;
using InteractionFn = std::function<double(double theta, double omega, double theta_t, double omega_t)>;

// Gamma(theta, omega, theta~, omega~) = sum_r left_r(theta, omega) * right_r(theta~, omega~)
struct SeparableTerm {
  ThetaOmegaFn left;
  ThetaOmegaFn right;
};

struct Atom {
  double value = 0.0;
  double probability = 1.0;
};

struct DisorderLaw {
  std::string name;
  std::function<double(Engine&)> sample;
  // Finite support used by the mean-field solver; empty for continuous laws.
  std::vector<Atom> atoms;
};

struct InitialLaw {
  std::string name;
  std::function<double(Engine&)> sample;
  // Density on the state space (per radian on the circle); empty for Dirac laws.
  std::function<double(double)> density;
  std::optional<double> dirac_point;
};

struct ModelSpec {
  std::string name;
  StateSpace state_space = StateSpace::circle;
  ThetaOmegaFn drift;
  InteractionFn gamma;
  std::vector<SeparableTerm> separable;  // empty when Gamma has no registered product form
  double gamma_bound = 0.0;              // recorded sup |Gamma|
  double noise_sigma = 1.0;
  DisorderLaw disorder;
  InitialLaw initial;

  [[nodiscard]] bool has_separable() const { return !separable.empty(); }
};

// ---- disorder laws ------------------------------------------------------

inline DisorderLaw dirac_disorder(double value = 0.0) {
  return {"dirac(" + std::to_string(value) + ")", [value](Engine&) { return value; }, {{value, 1.0}}};
}

// omega = +value or -value with probability 1/2 each.
inline DisorderLaw symmetric_two_point_disorder(double value) {
  return {"two_point(" + std::to_string(value) + ")",
          [value](Engine& eng) {
            std::bernoulli_distribution coin(0.5);
            return coin(eng) ? value : -value;
          },
          {{-value, 0.5}, {value, 0.5}}};
}

inline DisorderLaw uniform_disorder(double lo, double hi) {
  if (!(hi > lo)) throw ConfigError("uniform disorder needs hi > lo");
  return {"uniform(" + std::to_string(lo) + "," + std::to_string(hi) + ")",
          [lo, hi](Engine& eng) { return std::uniform_real_distribution<double>(lo, hi)(eng); },
          {}};
}

// ---- initial laws -------------------------------------------------------

inline InitialLaw uniform_circle_law() {
  return {"uniform_circle",
          [](Engine& eng) { return std::uniform_real_distribution<double>(0.0, kTwoPi)(eng); },
          [](double) { return 1.0 / kTwoPi; },
          std::nullopt};
}

inline InitialLaw dirac_law(double theta0) {
  return {"dirac(" + std::to_string(theta0) + ")", [theta0](Engine&) { return theta0; }, {}, theta0};
}

// Density (1 + amplitude cos theta) / (2 pi) on the circle, sampled by rejection.
inline InitialLaw cosine_circle_law(double amplitude) {
  if (std::abs(amplitude) > 1.0) throw ConfigError("cosine law amplitude must satisfy |a| <= 1");
  return {"cosine(" + std::to_string(amplitude) + ")",
          [amplitude](Engine& eng) {
            std::uniform_real_distribution<double> angle(0.0, kTwoPi);
            std::uniform_real_distribution<double> height(0.0, 1.0 + std::abs(amplitude));
            for (;;) {
              const double theta = angle(eng);
              if (height(eng) <= 1.0 + amplitude * std::cos(theta)) return theta;
            }
          },
          [amplitude](double theta) { return (1.0 + amplitude * std::cos(theta)) / kTwoPi; },
          std::nullopt};
}

inline InitialLaw normal_line_law(double mean, double sd) {
  if (!(sd > 0.0)) throw ConfigError("normal law needs sd > 0");
  return {"normal(" + std::to_string(mean) + "," + std::to_string(sd) + ")",
          [mean, sd](Engine& eng) { return std::normal_distribution<double>(mean, sd)(eng); },
          [mean, sd](double theta) {
            const double z = (theta - mean) / sd;
            return std::exp(-0.5 * z * z) / (sd * std::sqrt(kTwoPi));
          },
          std::nullopt};
}

// ---- built-in models ----------------------------------------------------

// Spatial Kuramoto: c = omega, Gamma = K sin(theta~ - theta).
inline ModelSpec build_kuramoto(double coupling, double sigma, DisorderLaw disorder, InitialLaw initial) {
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  ModelSpec m;
  m.name = "kuramoto";
  m.state_space = StateSpace::circle;
  m.drift = [](double, double omega) { return omega; };
  m.gamma = [coupling](double theta, double, double theta_t, double) { return coupling * std::sin(theta_t - theta); };
  m.separable = {
      {[coupling](double theta, double) { return coupling * std::cos(theta); },
       [](double theta_t, double) { return std::sin(theta_t); }},
      {[coupling](double theta, double) { return -coupling * std::sin(theta); },
       [](double theta_t, double) { return std::cos(theta_t); }},
  };
  m.gamma_bound = std::abs(coupling);
  m.noise_sigma = sigma;
  m.disorder = std::move(disorder);
  m.initial = std::move(initial);
  return m;
}

// c = 0, Gamma = constant. The drift of particle i is then exactly
// gamma_const * mean_weight, independent of the state.
inline ModelSpec build_probe(double gamma_const, double sigma = 1.0, StateSpace space = StateSpace::circle,
                             InitialLaw initial = uniform_circle_law(), DisorderLaw disorder = dirac_disorder()) {
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  ModelSpec m;
  m.name = "probe";
  m.state_space = space;
  m.drift = [](double, double) { return 0.0; };
  m.gamma = [gamma_const](double, double, double, double) { return gamma_const; };
  m.separable = {{[gamma_const](double, double) { return gamma_const; }, [](double, double) { return 1.0; }}};
  m.gamma_bound = std::abs(gamma_const);
  m.noise_sigma = sigma;
  m.disorder = std::move(disorder);
  m.initial = std::move(initial);
  return m;
}

// Non-interacting particles: c = drift_const, Gamma = 0.
inline ModelSpec build_free(double drift_const, double sigma, StateSpace space = StateSpace::circle,
                            InitialLaw initial = uniform_circle_law(), DisorderLaw disorder = dirac_disorder()) {
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  ModelSpec m;
  m.name = "free";
  m.state_space = space;
  m.drift = [drift_const](double, double) { return drift_const; };
  m.gamma = [](double, double, double, double) { return 0.0; };
  m.separable = {{[](double, double) { return 0.0; }, [](double, double) { return 0.0; }}};
  m.gamma_bound = 0.0;
  m.noise_sigma = sigma;
  m.disorder = std::move(disorder);
  m.initial = std::move(initial);
  return m;
}

inline double reduce_state(const ModelSpec& model, double theta) {
  return model.state_space == StateSpace::circle ? wrap_angle(theta) : theta;
}

struct Populations {
  std::vector<double> thetas;
  std::vector<double> omegas;
};

// i.i.d. draws of (theta_0, omega); thetas first, then omegas, from one engine.
inline Populations sample_populations(const ModelSpec& model, std::size_t count, Engine& rng) {
  if (count < 1) throw ConfigError("sample_populations needs count >= 1");
  Populations out;
  out.thetas.resize(count);
  out.omegas.resize(count);
  for (auto& t : out.thetas) t = reduce_state(model, model.initial.sample(rng));
  for (auto& w : out.omegas) w = model.disorder.sample(rng);
  return out;
}

}  // namespace fluctlab
