#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

double rate_bits(double tau_w, double tau_no, std::span<const double> gains, std::span<const double> energies) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < gains.size(); ++i) s += static_cast<long double>(gains[i]) * energies[i];
  return static_cast<double>(static_cast<long double>(tau_w) * std::log2(1.0L + s / tau_no));
}

double bisection_water_level(const std::vector<double>& ratios, double budget) {
  double lo = std::numeric_limits<double>::infinity();
  double hi_ratio = 0.0;
  for (double g : ratios)
    if (std::isfinite(g)) {
      lo = std::min(lo, g);
      hi_ratio = std::max(hi_ratio, g);
    }
  double hi = lo + budget + (hi_ratio - lo) + 1.0;
  auto poured = [&](double level) {
    double s = 0.0;
    for (double g : ratios)
      if (std::isfinite(g)) s += std::max(0.0, level - g);
    return s;
  };
  for (int k = 0; k < 300; ++k) {
    const double mid = 0.5 * (lo + hi);
    (poured(mid) < budget ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<double> bisection_water_fill(const std::vector<double>& ratios, double budget) {
  const double level = bisection_water_level(ratios, budget);
  std::vector<double> out;
  for (double g : ratios) out.push_back(std::isfinite(g) ? std::max(0.0, level - g) : 0.0);
  return out;
}

double brute_force_two_by_two(const mac_alloc::SystemParams& params, const mac_alloc::ChannelRealization& realization,
                              double step) {
  const double tau_w = params.slot_seconds * params.bandwidth_hz;
  const double tau_no = params.slot_seconds * params.noise_watts;
  const double e1 = params.energy_budgets[0];
  const double e2 = params.energy_budgets[1];
  const auto n1 = static_cast<std::size_t>(std::llround(e1 / step));
  const auto n2 = static_cast<std::size_t>(std::llround(e2 / step));
  double best = 0.0;
  for (std::size_t a = 0; a <= n1; ++a) {
    for (std::size_t b = 0; b <= n2; ++b) {
      const double x = std::min(e1, a * step);
      const double y = std::min(e2, b * step);
      const double first[2] = {x, y};
      const double second[2] = {e1 - x, e2 - y};
      const double h0[2] = {realization.gains(0, 0), realization.gains(0, 1)};
      const double h1[2] = {realization.gains(1, 0), realization.gains(1, 1)};
      best = std::max(best, rate_bits(tau_w, tau_no, h0, first) + rate_bits(tau_w, tau_no, h1, second));
    }
  }
  return best;
}

std::vector<double> unit_exponential_thresholds(std::size_t horizon) {
  std::vector<double> nu(horizon);
  nu[horizon - 1] = 1.0;
  for (std::size_t k = horizon - 1; k-- > 0;) nu[k] = nu[k + 1] + std::exp(-nu[k + 1]);
  return nu;
}

double simpson(const std::function<double(double)>& f, double a, double b, std::size_t panels) {
  if (panels % 2) ++panels;
  const double h = (b - a) / static_cast<double>(panels);
  long double s = f(a) + f(b);
  for (std::size_t k = 1; k < panels; ++k) s += (k % 2 ? 4.0L : 2.0L) * f(a + h * static_cast<double>(k));
  return static_cast<double>(s * h / 3.0L);
}

double expected_max_by_survival(const std::function<double(double)>& survival, double floor, double upper) {
  return floor + simpson(survival, floor, upper, 200000);
}

MeanSe mean_se(const std::vector<double>& samples) {
  long double sum = 0.0L;
  for (double x : samples) sum += x;
  const long double n = static_cast<long double>(samples.size());
  const long double mean = sum / n;
  long double sq = 0.0L;
  for (double x : samples) sq += (x - mean) * (x - mean);
  return {static_cast<double>(mean), samples.size() > 1 ? static_cast<double>(std::sqrt(sq / (n - 1.0L) / n)) : 0.0};
}

double single_user_grid_optimum(const mac_alloc::SystemParams& params, const std::vector<double>& gains,
                                std::size_t points) {
  // Only two-slot instances are needed; the second slot takes the rest.
  const double tau_w = params.slot_seconds * params.bandwidth_hz;
  const double tau_no = params.slot_seconds * params.noise_watts;
  const double budget = params.energy_budgets[0];
  double best = 0.0;
  for (std::size_t k = 0; k <= points; ++k) {
    const double e = budget * static_cast<double>(k) / static_cast<double>(points);
    const double a[1] = {e};
    const double b[1] = {budget - e};
    const double g0[1] = {gains[0]};
    const double g1[1] = {gains[1]};
    best = std::max(best, rate_bits(tau_w, tau_no, g0, a) + rate_bits(tau_w, tau_no, g1, b));
  }
  return best;
}

}  // namespace oracle
