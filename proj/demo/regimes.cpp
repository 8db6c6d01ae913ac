// Small tour: the Riemann residual approaching chi(alpha), then a short
// N-ladder for the incoherent Kuramoto model on both sides of alpha = 1/2.

#include <cstdio>

#include "fluctlab/fluctlab.hpp"

using namespace fluctlab;

int main() {
  std::puts("alpha      N   residual          chi(alpha)");
  for (double alpha : {0.25, 0.75}) {
    const double chi = chi_alpha(alpha, 1e-8);
    for (std::int64_t n : {64, 1024, 16384}) {
      std::printf("%5.2f %6lld   %+.10f    %+.10f\n", alpha, static_cast<long long>(n), riemann_residual(n, alpha),
                  chi);
    }
  }

  // K I_alpha < sigma^2 keeps the uniform state stable, so the limit is stationary.
  const auto model = build_kuramoto(0.1, 1.0, dirac_disorder(), uniform_circle_law());
  const auto uniform = uniform_grid(128, {{0.0, 1.0}});
  LadderConfig config;
  config.n_halves = {512, 1024, 2048, 4096};
  config.replicas = 60;
  config.base_seed = 7;
  config.sim.dt = 0.05;
  config.sim.t_end = 1.0;
  config.workers = default_workers();

  std::puts("\nalpha  statistic  slope    predicted  regime");
  for (double alpha : {0.25, 0.75}) {
    config.alphas = {alpha};
    const Statistic stat = alpha < 0.5 ? Statistic::sd : Statistic::coupling_error;
    const auto rows =
        run_ladder(config, model, [&](double a) { return MeanFieldPath::stationary(model, a, uniform); }, stat);
    const auto est = fit_exponent(fit_points(rows, alpha));
    std::printf("%5.2f  %-9s  %+.3f   %+.3f     %s\n", alpha, to_string(stat), est.slope, predicted_exponent(alpha),
                to_string(classify_regime(alpha, est, 0.1)));
  }
}
