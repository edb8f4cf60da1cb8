#pragma once

#include <vector>

#include "mac_alloc/model.hpp"

namespace support {

/// Unit tau and N_o; bandwidth defaults to 1 Hz so rates read directly as log2 values.
inline mac_alloc::SystemParams params(std::size_t n_users, std::size_t horizon, std::vector<double> budgets,
                                      mac_alloc::FadingDistribution fading = mac_alloc::FadingDistribution::exponential(1.0),
                                      double bandwidth_hz = 1.0) {
  mac_alloc::SystemParams p;
  p.n_users = n_users;
  p.horizon = horizon;
  p.bandwidth_hz = bandwidth_hz;
  p.slot_seconds = 1.0;
  p.noise_watts = 1.0;
  p.energy_budgets = std::move(budgets);
  p.fading.assign(n_users, fading);
  return p;
}

inline mac_alloc::ChannelRealization realization(const std::vector<std::vector<double>>& rows) {
  mac_alloc::ChannelRealization r{mac_alloc::SlotMatrix(rows.size(), rows.front().size())};
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t i = 0; i < rows[t].size(); ++i) r.gains(t, i) = rows[t][i];
  return r;
}

}  // namespace support
