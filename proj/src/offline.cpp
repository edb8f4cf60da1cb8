#include "mac_alloc/offline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

#include "mac_alloc/errors.hpp"

namespace mac_alloc {

WaterFillSolution water_fill(const WaterFillProblem& problem) {
  if (!(problem.budget >= 0.0) || !std::isfinite(problem.budget))
    throw std::invalid_argument("water_fill: budget must be finite and >= 0");

  std::vector<double> finite;
  finite.reserve(problem.noise_ratios.size());
  for (double g : problem.noise_ratios) {
    if (std::isnan(g) || g <= 0.0) throw std::invalid_argument("water_fill: noise ratios must be > 0");
    if (std::isfinite(g)) finite.push_back(g);
  }

  WaterFillSolution out{std::vector<double>(problem.noise_ratios.size(), 0.0), 0.0};
  if (finite.empty()) {
    if (problem.budget > 0.0)
      throw InfeasibleError("water_fill: positive budget but no slot with non-zero gain");
    out.water_level = std::numeric_limits<double>::infinity();
    return out;
  }

  std::sort(finite.begin(), finite.end());
  // Grow the active set from the best slot until the level no longer reaches the next ratio.
  double prefix = 0.0;
  double level = finite.front();
  for (std::size_t k = 0; k < finite.size(); ++k) {
    prefix += finite[k];
    level = (problem.budget + prefix) / static_cast<double>(k + 1);
    if (k + 1 == finite.size() || level <= finite[k + 1]) break;
  }
  out.water_level = level;
  for (std::size_t t = 0; t < problem.noise_ratios.size(); ++t)
    out.allocation[t] = std::max(0.0, level - problem.noise_ratios[t]);
  return out;
}

std::vector<double> effective_noise_ratios(const SystemParams& params, const ChannelRealization& realization,
                                           const AllocationMatrix& alloc, std::size_t user) {
  std::vector<double> ratios(params.horizon);
  for (std::size_t t = 0; t < params.horizon; ++t) {
    const double h = realization.gains(t, user);
    if (h <= 0.0) {
      ratios[t] = std::numeric_limits<double>::infinity();
      continue;
    }
    double interference = params.noise_energy();
    for (std::size_t n = 0; n < params.n_users; ++n)
      if (n != user) interference += realization.gains(t, n) * alloc.energies(t, n);
    ratios[t] = interference / h;
  }
  return ratios;
}

IwfResult iterative_water_fill(const SystemParams& params, const ChannelRealization& realization,
                               const IwfConfig& config) {
  if (config.max_iters < 1) throw std::invalid_argument("iterative_water_fill: max_iters must be >= 1");
  if (!(config.objective_tol > 0.0)) throw std::invalid_argument("iterative_water_fill: objective_tol must be > 0");
  if (realization.gains.slots() != params.horizon || realization.gains.users() != params.n_users)
    throw std::invalid_argument("iterative_water_fill: realization does not match params");

  IwfResult result{AllocationMatrix{SlotMatrix(params.horizon, params.n_users)}, 0, {}};
  auto& e = result.allocation.energies;

  for (std::size_t sweep = 1; sweep <= config.max_iters; ++sweep) {
    double moved = 0.0;
    for (std::size_t i = 0; i < params.n_users; ++i) {
      const auto solution =
          water_fill({effective_noise_ratios(params, realization, result.allocation, i), params.energy_budgets[i]});
      const double scale = std::max(1.0, params.energy_budgets[i]);
      for (std::size_t t = 0; t < params.horizon; ++t) {
        moved = std::max(moved, std::abs(solution.allocation[t] - e(t, i)) / scale);
        e(t, i) = solution.allocation[t];
      }
    }
    result.iterations = sweep;
    result.objective_trace.push_back(realized_throughput_nats(params, realization, result.allocation));

    // A single user has no interference to react to, so one sweep is exact.
    if (params.n_users == 1) break;
    if (sweep >= 2) {
      const double now = result.objective_trace[sweep - 1];
      const double before = result.objective_trace[sweep - 2];
      // The objective is flat at the optimum, so the allocation has to settle as well.
      if (now - before <= config.objective_tol * std::abs(now) && moved <= config.objective_tol) break;
    }
  }
  return result;
}

double KktReport::max_residual() const {
  return std::max({stationarity_residual, complementary_slackness_residual, budget_residual});
}

KktReport verify_kkt(const SystemParams& params, const ChannelRealization& realization,
                     const AllocationMatrix& alloc) {
  const auto& h = realization.gains;
  const auto& e = alloc.energies;
  if (h.slots() != params.horizon || e.slots() != params.horizon || h.users() != params.n_users ||
      e.users() != params.n_users)
    throw std::invalid_argument("verify_kkt: dimension mismatch");

  std::vector<double> denom(params.horizon, params.noise_energy());
  for (std::size_t t = 0; t < params.horizon; ++t)
    for (std::size_t n = 0; n < params.n_users; ++n) denom[t] += h(t, n) * e(t, n);

  // d/de of tau W log2(1 + s / tau N_o) is tau W h / (ln 2 (tau N_o + s)).
  const double scale = params.rate_scale() / std::numbers::ln2;

  KktReport report;
  report.water_levels.assign(params.n_users, 0.0);
  for (std::size_t i = 0; i < params.n_users; ++i) {
    double mu = 0.0;
    std::size_t active = 0;
    for (std::size_t t = 0; t < params.horizon; ++t) {
      if (e(t, i) > kActiveSlotThreshold) {
        mu += scale * h(t, i) / denom[t];
        ++active;
      }
    }
    const double budget = params.energy_budgets[i];
    report.budget_residual =
        std::max(report.budget_residual, std::abs(e.column_sum(i) - budget) / std::max(1.0, budget));
    if (active == 0) continue;
    mu /= static_cast<double>(active);
    report.water_levels[i] = scale / mu;

    for (std::size_t t = 0; t < params.horizon; ++t) {
      const double marginal = scale * h(t, i) / denom[t];
      if (e(t, i) > kActiveSlotThreshold)
        report.stationarity_residual = std::max(report.stationarity_residual, std::abs(marginal - mu) / mu);
      else
        report.complementary_slackness_residual =
            std::max(report.complementary_slackness_residual, std::max(0.0, marginal - mu) / mu);
    }
  }
  return report;
}

GapCheck single_iteration_gap_check(const SystemParams& params, const ChannelRealization& realization,
                                    const IwfConfig& converged) {
  const auto one = iterative_water_fill(params, realization, IwfConfig{1, converged.objective_tol});
  const auto full = iterative_water_fill(params, realization, converged);
  GapCheck out;
  out.gap_nats = full.objective_trace.back() - one.objective_trace.back();
  out.bound_nats = params.rate_scale() * static_cast<double>(params.n_users - 1) *
                   static_cast<double>(params.horizon) / 2.0;
  return out;
}

}  // namespace mac_alloc
