#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mac_alloc/model.hpp"
#include "mac_alloc/offline.hpp"

namespace mac_alloc {

/// Spends E_i / T in every slot regardless of the channel.
class EqualEnergyPolicy final : public CausalPolicy {
 public:
  explicit EqualEnergyPolicy(const SystemParams& params);

  std::vector<double> allocate(std::size_t t, const EnergyState& state,
                               std::span<const double> gains) const override;

 private:
  std::vector<double> per_slot_;
  std::size_t horizon_;
};

/// Per-user stopping thresholds. nu[i][k] holds nu_{k+1} for k = 0..T, so
/// nu[i][T-1] is the user's mean gain and nu[i][T] is zero.
struct OneShotThresholds {
  std::vector<std::vector<double>> nu;

  /// Threshold a gain must strictly exceed to transmit at zero-based slot t.
  double transmit_threshold(std::size_t user, std::size_t t) const { return nu[user][t + 1]; }
};

/// Backward recursion nu_{t-1} = E[max(h, nu_t)] from nu_{T+1} = 0.
OneShotThresholds one_shot_thresholds(const SystemParams& params);

/// Each user dumps everything into the first slot whose gain strictly beats the
/// threshold of the following slot.
class OneShotPolicy final : public CausalPolicy {
 public:
  OneShotPolicy(OneShotThresholds thresholds, const SystemParams& params);

  std::vector<double> allocate(std::size_t t, const EnergyState& state,
                               std::span<const double> gains) const override;

  const OneShotThresholds& thresholds() const noexcept { return thresholds_; }

 private:
  OneShotThresholds thresholds_;
};

/// Certainty-equivalent controller: at every slot it assumes future gains equal
/// their means, solves the remaining deterministic problem with IWF and applies
/// only the current slot's energies.
class CecPolicy final : public CausalPolicy {
 public:
  CecPolicy(SystemParams params, IwfConfig iwf = {});

  std::vector<double> allocate(std::size_t t, const EnergyState& state,
                               std::span<const double> gains) const override;

 private:
  SystemParams params_;
  IwfConfig iwf_;
  std::vector<double> mean_gains_;
};

}  // namespace mac_alloc
