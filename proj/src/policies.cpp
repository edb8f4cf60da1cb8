#include "mac_alloc/policies.hpp"

#include <algorithm>
#include <stdexcept>

#include "mac_alloc/fading.hpp"

namespace mac_alloc {

EqualEnergyPolicy::EqualEnergyPolicy(const SystemParams& params) : horizon_(params.horizon) {
  params.validate();
  per_slot_.reserve(params.n_users);
  for (double budget : params.energy_budgets) per_slot_.push_back(budget / static_cast<double>(params.horizon));
}

std::vector<double> EqualEnergyPolicy::allocate(std::size_t t, const EnergyState& state,
                                                std::span<const double> /*gains*/) const {
  // The last slot takes whatever is left so the column sums hit E_i exactly.
  if (t + 1 == horizon_) return state.levels;
  std::vector<double> out(per_slot_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(per_slot_[i], state.levels[i]);
  return out;
}

OneShotThresholds one_shot_thresholds(const SystemParams& params) {
  params.validate();
  OneShotThresholds out;
  out.nu.reserve(params.n_users);
  for (const auto& dist : params.fading) {
    std::vector<double> nu(params.horizon + 1, 0.0);
    for (std::size_t k = params.horizon; k-- > 0;) nu[k] = expected_max_with(dist, nu[k + 1]);
    out.nu.push_back(std::move(nu));
  }
  return out;
}

OneShotPolicy::OneShotPolicy(OneShotThresholds thresholds, const SystemParams& params)
    : thresholds_(std::move(thresholds)) {
  if (thresholds_.nu.size() != params.n_users)
    throw std::invalid_argument("one-shot thresholds do not match the number of users");
  for (const auto& nu : thresholds_.nu)
    if (nu.size() != params.horizon + 1) throw std::invalid_argument("one-shot thresholds do not match the horizon");
}

std::vector<double> OneShotPolicy::allocate(std::size_t t, const EnergyState& state,
                                            std::span<const double> gains) const {
  std::vector<double> out(state.levels.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (gains[i] > thresholds_.transmit_threshold(i, t)) out[i] = state.levels[i];
  return out;
}

CecPolicy::CecPolicy(SystemParams params, IwfConfig iwf) : params_(std::move(params)), iwf_(iwf) {
  params_.validate();
  for (const auto& dist : params_.fading) mean_gains_.push_back(dist.mean());
}

std::vector<double> CecPolicy::allocate(std::size_t t, const EnergyState& state,
                                        std::span<const double> gains) const {
  const std::size_t remaining = params_.horizon - t;
  if (remaining == 1) return state.levels;

  SystemParams sub = params_;
  sub.horizon = remaining;
  sub.energy_budgets = state.levels;

  ChannelRealization synthetic{SlotMatrix(remaining, params_.n_users)};
  for (std::size_t i = 0; i < params_.n_users; ++i) {
    synthetic.gains(0, i) = gains[i];
    for (std::size_t k = 1; k < remaining; ++k) synthetic.gains(k, i) = mean_gains_[i];
    // The certainty-equivalent budget constraint is an inequality: a user with no
    // usable slot simply keeps its energy.
    if (gains[i] <= 0.0 && mean_gains_[i] <= 0.0) sub.energy_budgets[i] = 0.0;
  }

  const auto solved = iterative_water_fill(sub, synthetic, iwf_);
  std::vector<double> out(params_.n_users);
  for (std::size_t i = 0; i < params_.n_users; ++i)
    out[i] = std::min(solved.allocation.energies(0, i), state.levels[i]);
  return out;
}

}  // namespace mac_alloc
