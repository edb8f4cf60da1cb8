#pragma once

#include <cstddef>
#include <vector>

#include "mac_alloc/model.hpp"

namespace mac_alloc {

/// Single-user water-filling instance. A noise ratio of +infinity marks a slot the
/// user cannot use (zero gain).
struct WaterFillProblem {
  std::vector<double> noise_ratios;
  double budget = 0.0;
};

struct WaterFillSolution {
  std::vector<double> allocation;
  double water_level = 0.0;
};

/// allocation[t] = (level - noise_ratios[t])^+ with the level chosen so the
/// allocation sums to the budget. Solved exactly by sorting the finite ratios.
/// Throws InfeasibleError when budget > 0 and every ratio is infinite.
WaterFillSolution water_fill(const WaterFillProblem& problem);

struct IwfConfig {
  std::size_t max_iters = 10000;
  /// Stop once a sweep improves the objective by less than this fraction of it and
  /// moves no energy entry by more than this fraction of max(1, budget).
  double objective_tol = 1e-9;

  friend bool operator==(const IwfConfig&, const IwfConfig&) = default;
};

struct IwfResult {
  AllocationMatrix allocation;
  std::size_t iterations = 0;
  /// Sum-rate in nats after each sweep.
  std::vector<double> objective_trace;
};

/// Gauss-Seidel iterative water-filling: each sweep water-fills users 0..N-1 in
/// turn against the interference of the others' current allocations.
IwfResult iterative_water_fill(const SystemParams& params, const ChannelRealization& realization,
                               const IwfConfig& config = {});

/// Interference-plus-noise to gain ratios seen by `user` given everyone else's energies.
std::vector<double> effective_noise_ratios(const SystemParams& params, const ChannelRealization& realization,
                                           const AllocationMatrix& alloc, std::size_t user);

/// Energy below which a slot counts as inactive when checking optimality conditions.
inline constexpr double kActiveSlotThreshold = 1e-9;

struct KktReport {
  std::vector<double> water_levels;
  double stationarity_residual = 0.0;
  double complementary_slackness_residual = 0.0;
  double budget_residual = 0.0;

  double max_residual() const;
};

/// Relative residuals of the Lagrangian optimality conditions for an allocation.
/// The budget multiplier of each user is taken as the mean marginal rate over its
/// active slots.
KktReport verify_kkt(const SystemParams& params, const ChannelRealization& realization,
                     const AllocationMatrix& alloc);

struct GapCheck {
  double gap_nats = 0.0;
  double bound_nats = 0.0;
};

/// Sum-rate shortfall after a single IWF sweep relative to the converged solution,
/// next to the tau W (N-1) T / 2 nats bound.
GapCheck single_iteration_gap_check(const SystemParams& params, const ChannelRealization& realization,
                                    const IwfConfig& converged = {});

}  // namespace mac_alloc
