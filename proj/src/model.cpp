#include "mac_alloc/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "mac_alloc/errors.hpp"

namespace mac_alloc {
namespace {

double received_energy(const SystemParams& params, std::span<const double> energies,
                       std::span<const double> gains) {
  if (energies.size() != params.n_users || gains.size() != params.n_users)
    throw std::invalid_argument(fmt::format("sum_throughput: expected {} users, got {} energies and {} gains",
                                            params.n_users, energies.size(), gains.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < energies.size(); ++i) {
    if (!(energies[i] >= 0.0) || !(gains[i] >= 0.0))
      throw std::invalid_argument(fmt::format("sum_throughput: negative entry for user {}", i));
    s += gains[i] * energies[i];
  }
  return s;
}

void check_dims(const SystemParams& params, const SlotMatrix& m, const char* what) {
  if (m.slots() != params.horizon || m.users() != params.n_users)
    throw std::invalid_argument(fmt::format("{} is {}x{}, expected {}x{}", what, m.slots(), m.users(),
                                            params.horizon, params.n_users));
}

}  // namespace

void SystemParams::validate() const {
  if (n_users < 1) throw std::invalid_argument("n_users must be >= 1");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (!(bandwidth_hz > 0.0) || !(slot_seconds > 0.0) || !(noise_watts > 0.0))
    throw std::invalid_argument("bandwidth, slot length and noise power must be > 0");
  if (energy_budgets.size() != n_users)
    throw std::invalid_argument(fmt::format("expected {} energy budgets, got {}", n_users, energy_budgets.size()));
  if (fading.size() != n_users)
    throw std::invalid_argument(fmt::format("expected {} fading distributions, got {}", n_users, fading.size()));
  for (double e : energy_budgets)
    if (!(e >= 0.0) || !std::isfinite(e)) throw std::invalid_argument("energy budgets must be finite and >= 0");
}

double SlotMatrix::column_sum(std::size_t i) const {
  double s = 0.0;
  for (std::size_t t = 0; t < slots_; ++t) s += (*this)(t, i);
  return s;
}

double sum_throughput(const SystemParams& params, std::span<const double> energies,
                      std::span<const double> gains) {
  const double s = received_energy(params, energies, gains);
  return params.rate_scale() * std::log2(1.0 + s / params.noise_energy());
}

double sum_throughput_nats(const SystemParams& params, std::span<const double> energies,
                           std::span<const double> gains) {
  const double s = received_energy(params, energies, gains);
  return params.rate_scale() * std::log1p(s / params.noise_energy());
}

EnergyState advance_energy(const EnergyState& state, std::span<const double> spent) {
  if (spent.size() != state.levels.size())
    throw std::invalid_argument(fmt::format("advance_energy: {} levels but {} spends", state.levels.size(), spent.size()));
  EnergyState next{state.levels};
  for (std::size_t i = 0; i < spent.size(); ++i) {
    if (!(spent[i] >= -kEnergyTolerance) || spent[i] > state.levels[i] + kEnergyTolerance)
      throw OverdraftError(i, spent[i], state.levels[i]);
    next.levels[i] = std::clamp(state.levels[i] - spent[i], 0.0, state.levels[i]);
  }
  return next;
}

double realized_throughput(const SystemParams& params, const ChannelRealization& realization,
                           const AllocationMatrix& alloc) {
  check_dims(params, realization.gains, "realization");
  check_dims(params, alloc.energies, "allocation");
  double total = 0.0;
  for (std::size_t t = 0; t < params.horizon; ++t)
    total += sum_throughput(params, alloc.energies.row(t), realization.gains.row(t));
  return total;
}

double realized_throughput_nats(const SystemParams& params, const ChannelRealization& realization,
                                const AllocationMatrix& alloc) {
  check_dims(params, realization.gains, "realization");
  check_dims(params, alloc.energies, "allocation");
  double total = 0.0;
  for (std::size_t t = 0; t < params.horizon; ++t)
    total += sum_throughput_nats(params, alloc.energies.row(t), realization.gains.row(t));
  return total;
}

void check_allocation(const SystemParams& params, const AllocationMatrix& alloc, bool exhaust,
                      double tolerance) {
  check_dims(params, alloc.energies, "allocation");
  for (std::size_t i = 0; i < params.n_users; ++i) {
    for (std::size_t t = 0; t < params.horizon; ++t)
      if (!(alloc.energies(t, i) >= 0.0))
        throw std::invalid_argument(fmt::format("allocation negative at slot {} user {}", t, i));
    const double used = alloc.energies.column_sum(i);
    const double budget = params.energy_budgets[i];
    if (used > budget + tolerance || (exhaust && used < budget - tolerance))
      throw std::invalid_argument(fmt::format("user {} spends {} of budget {}", i, used, budget));
  }
}

AllocationMatrix run_causal_policy(const CausalPolicy& policy, const SystemParams& params,
                                   const ChannelRealization& realization) {
  check_dims(params, realization.gains, "realization");
  AllocationMatrix alloc{SlotMatrix(params.horizon, params.n_users)};
  EnergyState state{params.energy_budgets};
  for (std::size_t t = 0; t < params.horizon; ++t) {
    const auto spend = policy.allocate(t, state, realization.gains.row(t));
    EnergyState next = advance_energy(state, spend);
    for (std::size_t i = 0; i < params.n_users; ++i)
      alloc.energies(t, i) = state.levels[i] - next.levels[i];
    state = std::move(next);
  }
  return alloc;
}

OverdraftError::OverdraftError(std::size_t user, double requested, double available)
    : std::runtime_error(fmt::format("user {} overdraft: requested {} J with {} J available", user,
                                     requested, available)),
      user_(user) {}

}  // namespace mac_alloc
