#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mac_alloc/fading.hpp"

namespace mac_alloc {

/// Absolute energy tolerance in joules used for every feasibility comparison.
inline constexpr double kEnergyTolerance = 1e-9;

/// Static description of the multiple-access problem.
struct SystemParams {
  std::size_t n_users = 1;
  std::size_t horizon = 1;
  double bandwidth_hz = 1e6;
  double slot_seconds = 1.0;
  double noise_watts = 1.0;
  std::vector<double> energy_budgets;
  std::vector<FadingDistribution> fading;

  /// Throws std::invalid_argument when any field is out of range or sizes disagree.
  void validate() const;

  /// tau * N_o, the per-slot noise energy.
  double noise_energy() const noexcept { return slot_seconds * noise_watts; }
  /// tau * W, the bits-per-unit-log2 scale of the rate.
  double rate_scale() const noexcept { return slot_seconds * bandwidth_hz; }

  friend bool operator==(const SystemParams&, const SystemParams&) = default;
};

/// Dense row-major matrix indexed [slot][user].
class SlotMatrix {
 public:
  SlotMatrix() = default;
  SlotMatrix(std::size_t slots, std::size_t users, double fill = 0.0)
      : slots_(slots), users_(users), data_(slots * users, fill) {}

  std::size_t slots() const noexcept { return slots_; }
  std::size_t users() const noexcept { return users_; }

  double& operator()(std::size_t t, std::size_t i) { return data_[t * users_ + i]; }
  double operator()(std::size_t t, std::size_t i) const { return data_[t * users_ + i]; }

  std::span<double> row(std::size_t t) { return {data_.data() + t * users_, users_}; }
  std::span<const double> row(std::size_t t) const { return {data_.data() + t * users_, users_}; }

  double column_sum(std::size_t i) const;

  const std::vector<double>& data() const noexcept { return data_; }

  friend bool operator==(const SlotMatrix&, const SlotMatrix&) = default;

 private:
  std::size_t slots_ = 0;
  std::size_t users_ = 0;
  std::vector<double> data_;
};

/// Channel power gains h_t^(i) for one episode.
struct ChannelRealization {
  SlotMatrix gains;

  friend bool operator==(const ChannelRealization&, const ChannelRealization&) = default;
};

/// Energies e_t^(i) consumed by a policy over one episode.
struct AllocationMatrix {
  SlotMatrix energies;
};

/// Remaining energy per user at the start of a slot.
struct EnergyState {
  std::vector<double> levels;
};

/// Sum-throughput of one slot in bits: tau W log2(1 + sum_i h_i e_i / (tau N_o)).
double sum_throughput(const SystemParams& params, std::span<const double> energies,
                      std::span<const double> gains);

/// Same rate in nats (natural log). Used for bounds quoted in nats.
double sum_throughput_nats(const SystemParams& params, std::span<const double> energies,
                           std::span<const double> gains);

/// Subtracts spent energy from the queue. Round-off overdraft up to
/// kEnergyTolerance is clamped; anything larger throws OverdraftError.
EnergyState advance_energy(const EnergyState& state, std::span<const double> spent);

/// Total bits over all slots of a realization under an allocation.
double realized_throughput(const SystemParams& params, const ChannelRealization& realization,
                           const AllocationMatrix& alloc);

/// Same total in nats.
double realized_throughput_nats(const SystemParams& params, const ChannelRealization& realization,
                                const AllocationMatrix& alloc);

/// Throws std::invalid_argument unless the allocation is non-negative and within
/// budget. With `exhaust` the column sums must also equal the budgets.
void check_allocation(const SystemParams& params, const AllocationMatrix& alloc,
                      bool exhaust = false, double tolerance = kEnergyTolerance);

/// Online policy: sees only the current slot's gains and the current energy state.
/// Implementations are immutable after construction and safe to share across threads.
class CausalPolicy {
 public:
  virtual ~CausalPolicy() = default;

  /// Energies to spend at zero-based slot `t`. Must satisfy 0 <= e_i <= state.levels[i].
  virtual std::vector<double> allocate(std::size_t t, const EnergyState& state,
                                       std::span<const double> gains) const = 0;
};

/// Runs a causal policy slot by slot through advance_energy, handing it only the
/// current row of gains.
AllocationMatrix run_causal_policy(const CausalPolicy& policy, const SystemParams& params,
                                   const ChannelRealization& realization);

}  // namespace mac_alloc
