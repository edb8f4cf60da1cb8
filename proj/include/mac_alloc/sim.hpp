#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mac_alloc/model.hpp"
#include "mac_alloc/offline.hpp"
#include "mac_alloc/online_dp.hpp"

namespace mac_alloc {

/// Uniform draw in [0, 1) for (seed, realization, slot, user). Stateless, so any
/// realization can be regenerated in isolation and in any order.
double counter_uniform(std::uint64_t seed, std::uint64_t realization, std::uint64_t slot, std::uint64_t user);

ChannelRealization generate_realization(const SystemParams& params, std::uint64_t seed, std::uint64_t index);

std::vector<ChannelRealization> generate_realizations(const SystemParams& params, std::size_t n,
                                                      std::uint64_t seed);

enum class PolicyKind { offline_iwf, dp_optimal, cec, one_shot, equal_energy };

std::string_view policy_name(PolicyKind kind);
/// Throws std::invalid_argument for unknown names.
PolicyKind parse_policy(std::string_view name);
const std::vector<PolicyKind>& all_policies();

enum class SweepAxis { none, snr_db, n_users };

std::string_view axis_name(SweepAxis axis);
SweepAxis parse_axis(std::string_view name);

struct Sweep {
  SweepAxis axis = SweepAxis::none;
  std::vector<double> values;
  /// n_users axis only: transmit SNRs to repeat the user sweep at. Empty keeps the
  /// base budgets (the first user's budget is given to every user).
  std::vector<double> snr_db;

  friend bool operator==(const Sweep&, const Sweep&) = default;
};

struct ExperimentSpec {
  SystemParams params;
  std::vector<PolicyKind> policies;
  std::size_t n_realizations = 1;
  std::uint64_t seed = 0;
  Sweep sweep;
  IwfConfig iwf;
  DpConfig dp;
  /// dp_optimal is skipped at sweep points with more users than this.
  std::optional<std::size_t> dp_max_users;

  friend bool operator==(const ExperimentSpec&, const ExperimentSpec&) = default;
};

struct RunOptions {
  std::size_t threads = 1;
  std::optional<std::filesystem::path> table_cache_dir;
};

/// E_i = SNR_linear * tau N_o / h_o^(i).
std::vector<double> budgets_for_snr(const SystemParams& params, double snr_db);

struct SweepPoint {
  double value = 0.0;
  /// SNR of the group this point belongs to (n_users sweeps over several SNRs).
  std::optional<double> group_snr_db;
  SystemParams params;
};

/// Expands the sweep into concrete parameter sets, in output order.
std::vector<SweepPoint> resolve_sweep(const ExperimentSpec& spec);

struct PolicyStats {
  PolicyKind policy = PolicyKind::offline_iwf;
  double mean_bits = 0.0;
  double stderr_bits = 0.0;
  std::size_t n_realizations = 0;
  double runtime_seconds = 0.0;
  /// Construction failure message; the policy has no statistics when set.
  std::string error;
  bool capacity_error = false;
  /// Left out by dp_max_users.
  bool skipped = false;

  bool has_stats() const noexcept { return error.empty() && !skipped; }
};

struct PointResult {
  SweepPoint point;
  std::vector<PolicyStats> policies;
  /// The DP's own forecast of expected throughput at the full budgets.
  std::optional<double> dp_predicted_bits;

  const PolicyStats* find(PolicyKind kind) const;
};

struct ExperimentResult {
  std::vector<PointResult> points;
};

/// Sample mean and standard error of the mean, accumulated in index order.
std::pair<double, double> mean_and_stderr(const std::vector<double>& samples);

/// Relative slack allowed before a causal policy beating offline counts as a violation.
inline constexpr double kDominanceTolerance = 1e-9;

/// Evaluates every selected policy on common realizations at each sweep point.
/// Throws ConsistencyError if a causal policy beats offline on some realization.
ExperimentResult run_experiment(const ExperimentSpec& spec, const RunOptions& options = {});

}  // namespace mac_alloc
