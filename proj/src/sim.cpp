#include "mac_alloc/sim.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <memory>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "mac_alloc/errors.hpp"
#include "mac_alloc/parallel.hpp"
#include "mac_alloc/policies.hpp"

namespace mac_alloc {
namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::array<std::string_view, 5> kPolicyNames = {"offline_iwf", "dp_optimal", "cec", "one_shot",
                                                          "equal_energy"};

SystemParams with_users(const SystemParams& base, std::size_t n_users) {
  SystemParams p = base;
  p.n_users = n_users;
  p.fading.assign(n_users, base.fading.front());
  const double budget = base.energy_budgets.empty() ? 0.0 : base.energy_budgets.front();
  p.energy_budgets.assign(n_users, budget);
  return p;
}

using Clock = std::chrono::steady_clock;

}  // namespace

double counter_uniform(std::uint64_t seed, std::uint64_t realization, std::uint64_t slot, std::uint64_t user) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ realization);
  h = splitmix64(h ^ (slot * 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ (user * 0x85157af5ULL + 0x2545f4914f6cdd1dULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

ChannelRealization generate_realization(const SystemParams& params, std::uint64_t seed, std::uint64_t index) {
  ChannelRealization r{SlotMatrix(params.horizon, params.n_users)};
  for (std::size_t t = 0; t < params.horizon; ++t)
    for (std::size_t i = 0; i < params.n_users; ++i)
      r.gains(t, i) = sample(params.fading[i], counter_uniform(seed, index, t, i));
  return r;
}

std::vector<ChannelRealization> generate_realizations(const SystemParams& params, std::size_t n,
                                                      std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_realizations: n must be >= 1");
  std::vector<ChannelRealization> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(generate_realization(params, seed, k));
  return out;
}

std::string_view policy_name(PolicyKind kind) { return kPolicyNames[static_cast<std::size_t>(kind)]; }

PolicyKind parse_policy(std::string_view name) {
  for (std::size_t k = 0; k < kPolicyNames.size(); ++k)
    if (kPolicyNames[k] == name) return static_cast<PolicyKind>(k);
  throw std::invalid_argument(fmt::format("unknown policy '{}'", name));
}

const std::vector<PolicyKind>& all_policies() {
  static const std::vector<PolicyKind> kAll = {PolicyKind::offline_iwf, PolicyKind::dp_optimal, PolicyKind::cec,
                                               PolicyKind::one_shot, PolicyKind::equal_energy};
  return kAll;
}

std::string_view axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::none: return "none";
    case SweepAxis::snr_db: return "snr_db";
    case SweepAxis::n_users: return "n_users";
  }
  return "none";
}

SweepAxis parse_axis(std::string_view name) {
  if (name == "none") return SweepAxis::none;
  if (name == "snr_db") return SweepAxis::snr_db;
  if (name == "n_users") return SweepAxis::n_users;
  throw std::invalid_argument(fmt::format("unknown sweep axis '{}'", name));
}

std::vector<double> budgets_for_snr(const SystemParams& params, double snr_db) {
  if (!std::isfinite(snr_db)) throw std::invalid_argument("SNR must be finite");
  const double linear = std::pow(10.0, snr_db / 10.0);
  std::vector<double> budgets;
  budgets.reserve(params.n_users);
  for (const auto& dist : params.fading) {
    if (!(dist.mean() > 0.0)) throw std::invalid_argument("SNR sweep needs every user to have a positive mean gain");
    budgets.push_back(linear * params.noise_energy() / dist.mean());
  }
  return budgets;
}

std::vector<SweepPoint> resolve_sweep(const ExperimentSpec& spec) {
  std::vector<SweepPoint> points;
  switch (spec.sweep.axis) {
    case SweepAxis::none:
      points.push_back({0.0, std::nullopt, spec.params});
      break;
    case SweepAxis::snr_db:
      for (double snr : spec.sweep.values) {
        SweepPoint p{snr, std::nullopt, spec.params};
        p.params.energy_budgets = budgets_for_snr(p.params, snr);
        points.push_back(std::move(p));
      }
      break;
    case SweepAxis::n_users: {
      if (spec.params.fading.empty()) throw std::invalid_argument("n_users sweep needs a fading distribution");
      auto add_users = [&](std::optional<double> snr) {
        for (double v : spec.sweep.values) {
          if (!(v >= 1.0) || v != std::floor(v) || v > 1e6)
            throw std::invalid_argument(fmt::format("n_users sweep value {} is not a positive integer", v));
          SweepPoint p{v, snr, with_users(spec.params, static_cast<std::size_t>(v))};
          if (snr) p.params.energy_budgets = budgets_for_snr(p.params, *snr);
          points.push_back(std::move(p));
        }
      };
      if (spec.sweep.snr_db.empty()) {
        add_users(std::nullopt);
      } else {
        for (double snr : spec.sweep.snr_db) add_users(snr);
      }
      break;
    }
  }
  for (const auto& p : points) p.params.validate();
  return points;
}

const PolicyStats* PointResult::find(PolicyKind kind) const {
  for (const auto& s : policies)
    if (s.policy == kind) return &s;
  return nullptr;
}

std::pair<double, double> mean_and_stderr(const std::vector<double>& samples) {
  if (samples.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double x : samples) sum += x;
  const double n = static_cast<double>(samples.size());
  const double mean = sum / n;
  if (samples.size() < 2) return {mean, 0.0};
  double sq = 0.0;
  for (double x : samples) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / (n - 1.0) / n)};
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const RunOptions& options) {
  if (spec.n_realizations < 1) throw std::invalid_argument("n_realizations must be >= 1");
  if (spec.policies.empty()) throw std::invalid_argument("no policies selected");

  ExperimentResult result;
  for (auto& point : resolve_sweep(spec)) {
    const SystemParams& params = point.params;
    PointResult out;
    out.point = point;

    // Causal policies, each with the slot in out.policies that it reports to.
    std::vector<std::pair<std::unique_ptr<CausalPolicy>, std::size_t>> causal;
    std::optional<std::size_t> offline_slot;
    for (PolicyKind kind : spec.policies) {
      PolicyStats stats;
      stats.policy = kind;
      const auto started = Clock::now();
      try {
        switch (kind) {
          case PolicyKind::offline_iwf:
            offline_slot = out.policies.size();
            break;
          case PolicyKind::equal_energy:
            causal.emplace_back(std::make_unique<EqualEnergyPolicy>(params), out.policies.size());
            break;
          case PolicyKind::one_shot:
            causal.emplace_back(std::make_unique<OneShotPolicy>(one_shot_thresholds(params), params),
                                out.policies.size());
            break;
          case PolicyKind::cec:
            causal.emplace_back(std::make_unique<CecPolicy>(params, spec.iwf), out.policies.size());
            break;
          case PolicyKind::dp_optimal: {
            if (spec.dp_max_users && params.n_users > *spec.dp_max_users) {
              stats.skipped = true;
              break;
            }
            ValueTable tables = options.table_cache_dir
                                    ? cached_value_tables(params, spec.dp, *options.table_cache_dir, options.threads)
                                    : build_value_tables(params, spec.dp, options.threads);
            out.dp_predicted_bits = tables.initial_value();
            causal.emplace_back(std::make_unique<DpPolicy>(std::move(tables), params, spec.dp), out.policies.size());
            break;
          }
        }
      } catch (const CapacityError& e) {
        stats.error = fmt::format("{}: {}", policy_name(kind), e.what());
        stats.capacity_error = true;
      } catch (const std::exception& e) {
        stats.error = fmt::format("{}: {}", policy_name(kind), e.what());
      }
      stats.runtime_seconds = std::chrono::duration<double>(Clock::now() - started).count();
      out.policies.push_back(std::move(stats));
    }

    const std::size_t n = spec.n_realizations;
    const std::size_t n_causal = causal.size();
    std::vector<double> offline_bits(n);
    std::vector<double> offline_secs(n);
    std::vector<std::vector<double>> causal_bits(n_causal, std::vector<double>(n));
    std::vector<std::vector<double>> causal_secs(n_causal, std::vector<double>(n));

    parallel_for(n, options.threads, [&](std::size_t k) {
      const auto realization = generate_realization(params, spec.seed, k);
      auto started = Clock::now();
      const auto offline = iterative_water_fill(params, realization, spec.iwf);
      offline_bits[k] = realized_throughput(params, realization, offline.allocation);
      offline_secs[k] = std::chrono::duration<double>(Clock::now() - started).count();

      for (std::size_t c = 0; c < n_causal; ++c) {
        started = Clock::now();
        const auto alloc = run_causal_policy(*causal[c].first, params, realization);
        check_allocation(params, alloc);
        const double bits = realized_throughput(params, realization, alloc);
        causal_secs[c][k] = std::chrono::duration<double>(Clock::now() - started).count();
        causal_bits[c][k] = bits;
        if (bits - offline_bits[k] > kDominanceTolerance * std::max(std::abs(offline_bits[k]), 1.0)) {
          std::string gains;
          for (std::size_t t = 0; t < params.horizon; ++t)
            gains += fmt::format("{}[{}]", t == 0 ? "" : " ", fmt::join(realization.gains.row(t), ", "));
          throw ConsistencyError(fmt::format(
              "realization {} (sweep value {}): {} achieved {} bits but offline only {} bits; gains {}", k,
              point.value, policy_name(out.policies[causal[c].second].policy), bits, offline_bits[k], gains));
        }
      }
    });

    auto total = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s;
    };
    if (offline_slot) {
      auto& s = out.policies[*offline_slot];
      std::tie(s.mean_bits, s.stderr_bits) = mean_and_stderr(offline_bits);
      s.n_realizations = n;
      s.runtime_seconds += total(offline_secs);
    }
    for (std::size_t c = 0; c < n_causal; ++c) {
      auto& s = out.policies[causal[c].second];
      std::tie(s.mean_bits, s.stderr_bits) = mean_and_stderr(causal_bits[c]);
      s.n_realizations = n;
      s.runtime_seconds += total(causal_secs[c]);
    }
    result.points.push_back(std::move(out));
  }
  return result;
}

}  // namespace mac_alloc
