// fluctlab: command line front end for the experiments.
//
// Exit codes: 0 success, 1 numeric failure, 2 configuration error. Failures
// print one line "fluctlab: error kind=<config|numeric> message=<text>" on stderr.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fluctlab/fluctlab.hpp"

using namespace fluctlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kSchemaVersion = "1";

// Every tunable of every command. The resolved values are echoed to metadata.json.
struct Params {
  std::string schema_version = kSchemaVersion;
  std::string output_dir = "fluctlab_out";
  std::uint64_t seed = 0;
  std::vector<double> alphas{0.25};
  std::vector<std::int64_t> n{512};
  std::size_t replicas = 200;
  double dt = 1e-3;
  double t_end = 1.0;
  std::size_t workers = default_workers();
  std::string method = "auto";
  double tol = 1e-6;
  std::string model = "kuramoto";
  double coupling = 1.0;
  double sigma = 1.0;
  double drift = 0.0;
  std::string space = "circle";
  std::string disorder = "dirac:0";
  std::string initial = "uniform";
  std::size_t cells = 256;
  std::size_t record_stride = 100;
  std::vector<std::string> observables{"order", "mean:sin1"};
  std::vector<std::string> f{"sin1"};
  std::vector<std::string> g;  // empty: no H output
  std::string statistic;  // empty: sd below 1/2, bias above
  double regime_tolerance = 0.1;
};

json to_json(const Params& p) {
  return json{{"schema_version", p.schema_version},
              {"output_dir", p.output_dir},
              {"seed", p.seed},
              {"alpha", p.alphas},
              {"n", p.n},
              {"replicas", p.replicas},
              {"dt", p.dt},
              {"t_end", p.t_end},
              {"workers", p.workers},
              {"method", p.method},
              {"tol", p.tol},
              {"model", p.model},
              {"coupling", p.coupling},
              {"sigma", p.sigma},
              {"drift", p.drift},
              {"space", p.space},
              {"disorder", p.disorder},
              {"initial", p.initial},
              {"cells", p.cells},
              {"record_stride", p.record_stride},
              {"observables", p.observables},
              {"f", p.f},
              {"g", p.g},
              {"statistic", p.statistic},
              {"regime_tolerance", p.regime_tolerance}};
}

template <class T>
void read_key(const json& doc, const char* key, T& out) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

// A scalar in the file is accepted where a list is expected.
template <class T>
void read_list(const json& doc, const char* key, std::vector<T>& out) {
  if (!doc.contains(key)) return;
  const json& v = doc.at(key);
  try {
    out = v.is_array() ? v.get<std::vector<T>>() : std::vector<T>{v.get<T>()};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

// Config file layer. Unknown keys and other schema versions are rejected.
void apply_config_file(const std::string& path, Params& p, bool& seed_given) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
  const json known = to_json(Params{});
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  read_key(doc, "schema_version", p.schema_version);
  if (p.schema_version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version '" + p.schema_version + "' (expected " + kSchemaVersion + ")");
  }
  read_key(doc, "output_dir", p.output_dir);
  if (doc.contains("seed")) {
    read_key(doc, "seed", p.seed);
    seed_given = true;
  }
  read_list(doc, "alpha", p.alphas);
  read_list(doc, "n", p.n);
  read_key(doc, "replicas", p.replicas);
  read_key(doc, "dt", p.dt);
  read_key(doc, "t_end", p.t_end);
  read_key(doc, "workers", p.workers);
  read_key(doc, "method", p.method);
  read_key(doc, "tol", p.tol);
  read_key(doc, "model", p.model);
  read_key(doc, "coupling", p.coupling);
  read_key(doc, "sigma", p.sigma);
  read_key(doc, "drift", p.drift);
  read_key(doc, "space", p.space);
  read_key(doc, "disorder", p.disorder);
  read_key(doc, "initial", p.initial);
  read_key(doc, "cells", p.cells);
  read_key(doc, "record_stride", p.record_stride);
  read_list(doc, "observables", p.observables);
  read_list(doc, "f", p.f);
  read_list(doc, "g", p.g);
  read_key(doc, "statistic", p.statistic);
  read_key(doc, "regime_tolerance", p.regime_tolerance);
}

// "name" or "name:v1,v2"
std::pair<std::string, std::vector<double>> split_spec(const std::string& text) {
  const auto colon = text.find(':');
  std::pair<std::string, std::vector<double>> out{text.substr(0, colon), {}};
  if (colon == std::string::npos) return out;
  std::stringstream rest(text.substr(colon + 1));
  std::string item;
  while (std::getline(rest, item, ',')) {
    try {
      std::size_t used = 0;
      out.second.push_back(std::stod(item, &used));
      if (used != item.size()) throw ConfigError("");
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + item + "' in '" + text + "'");
    }
  }
  return out;
}

void expect_args(const std::string& text, const std::vector<double>& args, std::size_t count) {
  if (args.size() != count) throw ConfigError("'" + text + "' needs " + std::to_string(count) + " parameter(s)");
}

DisorderLaw parse_disorder(const std::string& text) {
  const auto [name, args] = split_spec(text);
  if (name == "dirac") {
    return dirac_disorder(args.empty() ? 0.0 : (expect_args(text, args, 1), args[0]));
  }
  if (name == "two-point") {
    expect_args(text, args, 1);
    return symmetric_two_point_disorder(args[0]);
  }
  if (name == "uniform") {
    expect_args(text, args, 2);
    return uniform_disorder(args[0], args[1]);
  }
  throw ConfigError("unknown disorder '" + text + "' (dirac[:w], two-point:w, uniform:lo,hi)");
}

InitialLaw parse_initial(const std::string& text) {
  const auto [name, args] = split_spec(text);
  if (name == "uniform") return uniform_circle_law();
  if (name == "cosine") {
    expect_args(text, args, 1);
    return cosine_circle_law(args[0]);
  }
  if (name == "dirac") {
    expect_args(text, args, 1);
    return dirac_law(args[0]);
  }
  if (name == "normal") {
    expect_args(text, args, 2);
    return normal_line_law(args[0], args[1]);
  }
  throw ConfigError("unknown initial law '" + text + "' (uniform, cosine:a, dirac:theta, normal:m,sd)");
}

StateSpace parse_space(const std::string& s) {
  if (s == "circle") return StateSpace::circle;
  if (s == "line") return StateSpace::line;
  throw ConfigError("unknown state space '" + s + "' (circle, line)");
}

ModelSpec make_model(const Params& p) {
  const auto space = parse_space(p.space);
  if (p.model == "kuramoto") {
    if (space != StateSpace::circle) throw ConfigError("the Kuramoto model lives on the circle");
    return build_kuramoto(p.coupling, p.sigma, parse_disorder(p.disorder), parse_initial(p.initial));
  }
  if (p.model == "probe") return build_probe(p.coupling, p.sigma, space, parse_initial(p.initial), parse_disorder(p.disorder));
  if (p.model == "free") return build_free(p.drift, p.sigma, space, parse_initial(p.initial), parse_disorder(p.disorder));
  throw ConfigError("unknown model '" + p.model + "' (kuramoto, probe, free)");
}

// "left:right" with each side a test function id
TestFn2 parse_pair_fn(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("pair test function '" + text + "' must be left:right");
  return TestFn2::product(parse_test_fn(text.substr(0, colon)), parse_test_fn(text.substr(colon + 1)));
}

// The limit nu_t over [0, t_end]:
//  - line space: only the noiseless probe from a Dirac law, which translates;
//  - uniform initial law: stationary for every circle model here;
//  - otherwise the density solver with the run's time step.
MeanFieldPath limit_path(const Params& p, const ModelSpec& m, double alpha) {
  if (m.state_space == StateSpace::line) {
    if (p.model != "probe" || p.sigma != 0.0 || !m.initial.dirac_point) {
      throw ConfigError("line-space limits are available for the noiseless probe from a Dirac law only");
    }
    return translating_dirac_path(*m.initial.dirac_point, p.coupling * integral_psi(alpha));
  }
  if (m.disorder.atoms.empty()) throw ConfigError("the density solver needs a finite disorder law");
  if (p.initial == "uniform") return MeanFieldPath::stationary(m, alpha, uniform_grid(p.cells, m.disorder.atoms));
  auto sol = solve_density(m, alpha, initial_grid(m, p.cells), p.dt, p.t_end, 1);
  return MeanFieldPath::from_grids(m, alpha, std::move(sol.snapshots));
}

double single_alpha(const Params& p) {
  if (p.alphas.size() != 1) throw ConfigError("this command takes a single --alpha");
  return p.alphas.front();
}

std::int64_t single_n(const Params& p) {
  if (p.n.size() != 1) throw ConfigError("this command takes a single --n");
  return p.n.front();
}

SimConfig sim_config(const Params& p) {
  SimConfig c;
  c.dt = p.dt;
  c.t_end = p.t_end;
  c.seed = p.seed;
  c.method = parse_convolution_method(p.method);
  c.validate();
  c.record_stride = std::min(p.record_stride, c.steps());
  return c;
}

struct Context {
  std::string command;
  Params params;
  std::string hash;
  fs::path dir;

  CsvWriter csv(const std::string& name, const std::vector<std::string>& header) const {
    return CsvWriter(dir / name, header, hash);
  }
};

// ---- commands ----------------------------------------------------------------

int cmd_chi(const Context& ctx) {
  auto out = ctx.csv("chi.csv", {"alpha", "chi", "terms", "error_bound"});
  for (double a : ctx.params.alphas) {
    const auto r = chi_alpha_detailed(a, ctx.params.tol);
    out.row({a, r.value, r.terms, r.error_bound});
  }
  return 0;
}

int cmd_residual(const Context& ctx) {
  auto out = ctx.csv("residual.csv", {"alpha", "N", "residual", "chi", "gap"});
  for (double a : ctx.params.alphas) {
    const double chi = chi_alpha(a, ctx.params.tol);
    for (auto n : ctx.params.n) {
      const double r = riemann_residual(n, a);
      out.row({a, n, r, chi, std::abs(r - chi)});
    }
  }
  return 0;
}

int cmd_simulate(const Context& ctx) {
  const auto& p = ctx.params;
  const auto model = make_model(p);
  const auto lat = std::make_shared<const Lattice>(single_n(p), single_alpha(p));
  std::vector<Observable> obs;
  for (const auto& o : p.observables) obs.push_back(parse_observable(o));
  const auto traj = simulate(model, lat, sim_config(p), obs);
  auto out = ctx.csv("trajectory.csv", {"time", "observable", "value"});
  for (const auto& r : traj.records) out.row({r.time, r.id, r.value});
  return 0;
}

int cmd_mckv(const Context& ctx) {
  const auto& p = ctx.params;
  const auto model = make_model(p);
  const double alpha = single_alpha(p);
  const auto sol = solve_density(model, alpha, initial_grid(model, p.cells), p.dt, p.t_end, p.record_stride);
  auto dens = ctx.csv("density.csv", {"time", "omega", "theta", "density"});
  auto mom = ctx.csv("moments.csv", {"time", "order_parameter", "mass_error"});
  for (const auto& g : sol.snapshots) {
    for (std::size_t a = 0; a < g.atoms.size(); ++a) {
      for (std::size_t j = 0; j < g.cells; ++j) dens.row({g.time, g.atoms[a].value, g.center(j), g.at(a, j)});
    }
    const double c = expect_xi(g, [](double th, double) { return std::cos(th); });
    const double s = expect_xi(g, [](double th, double) { return std::sin(th); });
    double mass = 0.0;
    for (std::size_t a = 0; a < g.atoms.size(); ++a) mass = std::max(mass, std::abs(g.conditional_mass(a) - 1.0));
    mom.row({g.time, std::hypot(c, s), mass});
  }
  return 0;
}

int cmd_fluct(const Context& ctx) {
  const auto& p = ctx.params;
  const auto model = make_model(p);
  const double alpha = single_alpha(p);
  const auto lat = std::make_shared<const Lattice>(single_n(p), alpha);
  const auto method = parse_convolution_method(p.method);
  std::vector<TestFn1> fs;
  for (const auto& s : p.f) fs.push_back(parse_test_fn(s));
  std::vector<TestFn2> gs;
  for (const auto& s : p.g) gs.push_back(parse_pair_fn(s));
  const auto limit = limit_path(p, model, alpha);
  auto out = ctx.csv("fluct.csv", {"time", "quantity", "id", "value"});
  auto record = [&](const ParticleState& s, std::size_t step) {
    const bool last = s.time >= p.t_end - 1e-9 * p.dt;
    if (step % p.record_stride != 0 && !last) return;
    for (const auto& f : fs) out.row({s.time, std::string("eta"), f.id, eta_pair(s, limit, f)});
    for (const auto& g : gs) {
      out.row({s.time, std::string("h"), g.id(), h_pair(s, limit, g, method)});
      out.row({s.time, std::string("duality_gap"), g.id(), duality_gap(s, limit, g)});
    }
  };
  auto state = initial_state(model, lat, p.seed);
  if (p.t_end == 0.0) {
    record(state, 0);
    return 0;
  }
  run_steps(model, sim_config(p), std::move(state), record, &limit);
  return 0;
}

int cmd_martingale(const Context& ctx) {
  const auto& p = ctx.params;
  const auto model = make_model(p);
  const double alpha = single_alpha(p);
  const std::int64_t n = single_n(p);
  const auto lat = std::make_shared<const Lattice>(n, alpha);
  if (p.replicas < 2) throw ConfigError("martingale needs replicas >= 2");
  if (model.state_space != StateSpace::circle) throw ConfigError("martingale predictions need a circle model");
  const TestFn1 f = parse_test_fn(p.f.at(0));
  std::optional<TestFn2> g;
  if (!p.g.empty()) g = parse_pair_fn(p.g.front());
  // H tracking needs the limit; eta tracking does not.
  const std::optional<MeanFieldPath> limit = g ? std::optional(limit_path(p, model, alpha)) : std::nullopt;
  const SimConfig base = sim_config(p);

  struct Sample {
    double eta = 0.0;
    double h = 0.0;
  };
  const auto samples = parallel_map(p.replicas, p.workers, [&](std::size_t r) {
    SimConfig c = base;
    c.seed = derive_seed(p.seed, r);
    auto state = initial_state(model, lat, c.seed);
    state.track(f);
    if (g) state.track(*g);
    const auto end = run_steps(model, c, std::move(state), {}, limit ? &*limit : nullptr);
    Sample s;
    s.eta = end.eta_martingale(f.id).euler;
    if (g) s.h = end.mart_h.at(g->id()).value;
    return s;
  });

  auto stats = [&](auto get_a, auto get_b) {
    CompensatedSum sa, sb;
    for (const auto& s : samples) {
      sa.add(get_a(s));
      sb.add(get_b(s));
    }
    const double ma = sa.value() / static_cast<double>(samples.size());
    const double mb = sb.value() / static_cast<double>(samples.size());
    CompensatedSum c;
    for (const auto& s : samples) c.add((get_a(s) - ma) * (get_b(s) - mb));
    return c.value() / static_cast<double>(samples.size() - 1);
  };
  auto eta = [](const Sample& s) { return s.eta; };
  auto hh = [](const Sample& s) { return s.h; };

  std::vector<DensityGrid> path;
  if (p.initial == "uniform") {
    path.push_back(uniform_grid(p.cells, model.disorder.atoms));
  } else {
    path = solve_density(model, alpha, initial_grid(model, p.cells), p.dt, p.t_end, 1).snapshots;
  }
  const auto k = martingale_cov(f, f, g, p.t_end, path, alpha, model.noise_sigma);
  const double a_n = scale_factor(n, alpha);
  const double factor = 2.0 * a_n * a_n / static_cast<double>(2 * n);
  const double rep = static_cast<double>(p.replicas);
  // The H prediction is the Gaussian limit, available below alpha = 1/2 only.
  const double h_factor = alpha < 0.5 ? factor : std::nan("");

  auto out = ctx.csv("martingale.csv", {"quantity", "mc_value", "mc_stderr", "predicted"});
  const double v_eta = stats(eta, eta);
  out.row({std::string("var_eta:") + f.id, v_eta, v_eta * std::sqrt(2.0 / (rep - 1.0)), factor * k.k_eta});
  if (g) {
    const double v_h = stats(hh, hh);
    const double c_eh = stats(eta, hh);
    out.row({std::string("var_h:") + g->id(), v_h, v_h * std::sqrt(2.0 / (rep - 1.0)), h_factor * *k.k_h});
    out.row({std::string("cov_eta_h:") + f.id + ";" + g->id(), c_eh, std::sqrt((v_eta * v_h + c_eh * c_eh) / (rep - 1.0)),
             h_factor * *k.k_eta_h});
  }
  return 0;
}

int cmd_scaling(const Context& ctx) {
  const auto& p = ctx.params;
  const auto model = make_model(p);
  LadderConfig config;
  config.alphas = p.alphas;
  config.n_halves = p.n;
  config.replicas = p.replicas;
  config.base_seed = p.seed;
  config.observable = parse_test_fn(p.f.at(0));
  config.sim = sim_config(p);
  config.workers = p.workers;

  auto out = ctx.csv("scaling.csv", {"alpha", "N", "replicas", "statistic", "value", "stderr", "slope",
                                     "slope_stderr", "regime"});
  for (double alpha : p.alphas) {
    Statistic stat = alpha < 0.5 ? Statistic::sd : Statistic::abs_mean;
    if (!p.statistic.empty()) stat = parse_statistic(p.statistic);
    LadderConfig one = config;
    one.alphas = {alpha};
    const auto rows = run_ladder(one, model, [&](double a) { return limit_path(p, model, a); }, stat);
    std::optional<ScalingEstimate> est;
    std::string regime = "insufficient";
    if (rows.size() >= 3) {
      try {
        est = fit_exponent(fit_points(rows, alpha));
        regime = to_string(classify_regime(alpha, *est, p.regime_tolerance));
      } catch (const NumericError&) {
        regime = "unfit";
      }
    }
    for (const auto& r : rows) {
      out.row({r.alpha, r.n_half, static_cast<std::int64_t>(r.replicas), std::string(to_string(r.statistic)), r.value,
               r.stderr_, est ? est->slope : std::nan(""), est ? est->stderr_ : std::nan(""), regime});
    }
    std::cerr << "alpha=" << format_double(alpha) << " regime=" << regime;
    if (est) std::cerr << " slope=" << format_double(est->slope);
    std::cerr << '\n';
  }
  return 0;
}

int cmd_identity_suite(const Context& ctx) {
  const auto& p = ctx.params;
  const double alpha = single_alpha(p);
  const std::int64_t n = single_n(p);
  const auto lat = std::make_shared<const Lattice>(n, alpha);
  const auto model = build_kuramoto(p.coupling, p.sigma, dirac_disorder(), uniform_circle_law());
  const auto state = initial_state(model, lat, p.seed);
  const auto limit = MeanFieldPath::stationary(model, alpha, uniform_grid(p.cells, {{0.0, 1.0}}));

  auto out = ctx.csv("identities.csv", {"check", "value", "tolerance", "pass"});
  bool all = true;
  auto check = [&](const std::string& name, double value, double tolerance) {
    const bool ok = std::abs(value) <= tolerance;
    all = all && ok;
    out.row({name, value, tolerance, std::string(ok ? "true" : "false")});
  };

  const auto one = TestFn2::product(constant_fn(), constant_fn());
  for (const auto& g : {one, TestFn2::product(sin_fn(1), cos_fn(1)),
                        TestFn2::product(with_x(cos_fn(2), XPart::Kind::cos, 1), with_x(sin_fn(1), XPart::Kind::sin, 2))}) {
    check("duality_gap:" + g.id(), duality_report(state, limit, g).relative, 1e-10);
  }
  check("h_pair(1)-riemann_residual", h_pair(state, limit, one) - scale_factor(n, alpha) *
                                                                      std::pow(static_cast<double>(n), alpha - 1.0) *
                                                                      riemann_residual(n, alpha),
        1e-10);
  const auto g = TestFn2::product(sin_fn(1), cos_fn(2));
  check("h_pair:fft-direct", h_pair(state, limit, g, ConvolutionMethod::fast) -
                                 h_pair(state, limit, g, ConvolutionMethod::direct),
        1e-10);
  const auto fast = interaction_field(state, model, ConvolutionMethod::fast);
  const auto direct = interaction_field(state, model, ConvolutionMethod::direct);
  double diff = 0.0;
  for (std::size_t i = 0; i < fast.size(); ++i) diff = std::max(diff, std::abs(fast[i] - direct[i]));
  check("interaction_field:fft-direct", diff, 1e-10);
  check("eta_pair(1)", eta_pair(state, limit, constant_fn()), 1e-12);

  std::cerr << "identity-suite " << (all ? "passed" : "failed") << '\n';
  if (!all) throw NumericError("identity suite has failing checks (see identities.csv)");
  return 0;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int fail(const char* kind, const std::string& message, int code) {
  std::string one_line = message;
  for (char& c : one_line) {
    if (c == '\n') c = ' ';
  }
  std::cerr << "fluctlab: error kind=" << kind << " message=" << one_line << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fluctlab: fluctuation experiments for particle systems with power-law interactions"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  Params cli;
  std::string config_file;
  std::vector<std::string> alpha_text;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"chi", "chi(alpha) table"},
      {"residual", "Riemann residual ladder"},
      {"simulate", "simulate the particle system and record observables"},
      {"mckv", "solve the nonlinear Fokker-Planck equation"},
      {"fluct", "eta, H and the duality gap at t = 0 or along a run"},
      {"martingale", "Monte Carlo martingale covariances against the prediction"},
      {"scaling", "N-ladder, exponent fit and regime classification"},
      {"identity-suite", "exact finite-N identities"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_file, "JSON config file; flags override it");
    sub->add_option("--alpha,--alphas", alpha_text, "interaction exponent(s), comma separated")->delimiter(',');
    sub->add_option("--n", cli.n, "lattice half sizes N, comma separated")->delimiter(',');
    sub->add_option("--replicas", cli.replicas, "Monte Carlo replicas");
    sub->add_option("--dt", cli.dt, "time step");
    sub->add_option("--t-end", cli.t_end, "final time");
    sub->add_option("--seed", cli.seed, "base seed (fallback: FLUCTLAB_SEED)");
    sub->add_option("--workers", cli.workers, "parallel replicas");
    sub->add_option("--method", cli.method, "interaction method")->check(CLI::IsMember({"direct", "fast", "auto"}));
    sub->add_option("--output-dir", cli.output_dir, "output directory");
    sub->add_option("--tol", cli.tol, "tolerance for chi(alpha)");
    sub->add_option("--model", cli.model, "kuramoto | probe | free");
    sub->add_option("--coupling", cli.coupling, "coupling constant K (kuramoto) or Gamma (probe)");
    sub->add_option("--sigma", cli.sigma, "noise intensity");
    sub->add_option("--drift", cli.drift, "constant drift (free model)");
    sub->add_option("--space", cli.space, "circle | line");
    sub->add_option("--disorder", cli.disorder, "dirac[:w] | two-point:w | uniform:lo,hi");
    sub->add_option("--initial", cli.initial, "uniform | cosine:a | dirac:theta | normal:m,sd");
    sub->add_option("--cells", cli.cells, "density grid cells");
    sub->add_option("--record-stride", cli.record_stride, "steps between records");
    sub->add_option("--observables", cli.observables, "order, mean:<f>, mart:<f>")->delimiter(',');
    sub->add_option("--f", cli.f, "test functions: one, theta, sin<k>, cos<k>, optionally *cosx<l> or *sinx<l>")->delimiter(',');
    sub->add_option("--g", cli.g, "pair test functions left:right, e.g. sin1:cos1")->delimiter(',');
    sub->add_option("--statistic", cli.statistic, "sd | bias | coupling");
    sub->add_option("--regime-tolerance", cli.regime_tolerance, "slope tolerance for classification");
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config", e.what(), 2);
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();

  try {
    Params p;
    bool seed_given = false;
    if (!config_file.empty()) apply_config_file(config_file, p, seed_given);
    auto given = [&](const char* flag) { return sub->count(flag) > 0; };
    if (given("--alpha")) {
      p.alphas.clear();
      for (const auto& a : alpha_text) {
        try {
          std::size_t used = 0;
          p.alphas.push_back(std::stod(a, &used));
          if (used != a.size()) throw ConfigError("");
        } catch (const std::exception&) {
          throw ConfigError("bad --alpha value '" + a + "'");
        }
      }
    }
    if (given("--n")) p.n = cli.n;
    if (given("--replicas")) p.replicas = cli.replicas;
    if (given("--dt")) p.dt = cli.dt;
    if (given("--t-end")) p.t_end = cli.t_end;
    if (given("--seed")) {
      p.seed = cli.seed;
      seed_given = true;
    }
    if (given("--workers")) p.workers = cli.workers;
    if (given("--method")) p.method = cli.method;
    if (given("--output-dir")) p.output_dir = cli.output_dir;
    if (given("--tol")) p.tol = cli.tol;
    if (given("--model")) p.model = cli.model;
    if (given("--coupling")) p.coupling = cli.coupling;
    if (given("--sigma")) p.sigma = cli.sigma;
    if (given("--drift")) p.drift = cli.drift;
    if (given("--space")) p.space = cli.space;
    if (given("--disorder")) p.disorder = cli.disorder;
    if (given("--initial")) p.initial = cli.initial;
    if (given("--cells")) p.cells = cli.cells;
    if (given("--record-stride")) p.record_stride = cli.record_stride;
    if (given("--observables")) p.observables = cli.observables;
    if (given("--f")) p.f = cli.f;
    if (given("--g")) p.g = cli.g;
    if (given("--statistic")) p.statistic = cli.statistic;
    if (given("--regime-tolerance")) p.regime_tolerance = cli.regime_tolerance;
    if (!seed_given) {
      if (const char* env = std::getenv("FLUCTLAB_SEED")) {
        try {
          p.seed = std::stoull(env);
        } catch (const std::exception&) {
          throw ConfigError(std::string("FLUCTLAB_SEED is not an integer: '") + env + "'");
        }
      }
    }
    if (p.alphas.empty()) throw ConfigError("at least one alpha is required");
    for (double a : p.alphas) check_alpha(a);
    if (p.n.empty()) throw ConfigError("at least one N is required");
    for (auto n : p.n) {
      if (n < 1) throw ConfigError("N must be >= 1");
    }
    if (p.workers < 1) throw ConfigError("workers must be >= 1");
    if (p.record_stride < 1) throw ConfigError("record stride must be >= 1");
    if (p.f.empty()) throw ConfigError("at least one test function is required");

    // The hash covers the resolved parameters except where outputs go.
    json resolved = to_json(p);
    json hashed = resolved;
    hashed.erase("output_dir");
    hashed.erase("workers");
    hashed["command"] = command;
    Context ctx{command, p, hex64(fnv1a64(hashed.dump())), fs::path(p.output_dir)};
    std::error_code ec;
    fs::create_directories(ctx.dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + p.output_dir + "': " + ec.message());

    json meta{{"command", command},       {"config", resolved},       {"seed", p.seed},
              {"config_hash", ctx.hash}, {"created_utc", utc_now()}, {"schema_version", kSchemaVersion}};
    {
      std::ofstream m(ctx.dir / "metadata.json");
      if (!m) throw ConfigError("cannot write metadata.json in '" + p.output_dir + "'");
      m << meta.dump(2) << '\n';
    }

    static const std::map<std::string, int (*)(const Context&)> dispatch{
        {"chi", cmd_chi},         {"residual", cmd_residual},     {"simulate", cmd_simulate},
        {"mckv", cmd_mckv},       {"fluct", cmd_fluct},           {"martingale", cmd_martingale},
        {"scaling", cmd_scaling}, {"identity-suite", cmd_identity_suite}};
    return dispatch.at(command)(ctx);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const NumericError& e) {
    return fail("numeric", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("numeric", e.what(), 1);
  }
}
