#include <algorithm>
#include <fstream>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "mac_alloc/cli.hpp"
#include "mac_alloc/errors.hpp"

namespace mac_alloc::cli {
namespace {

constexpr std::string_view kCapacityHint =
    "lower solver.dp.energy_grid_points, set experiment.dp_max_users, or drop dp_optimal from experiment.policies";

bool write_file(const std::filesystem::path& path, const std::string& text, std::ostream& err) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.close();
  if (!out) {
    err << error_line(kFailure, "io", fmt::format("cannot write '{}'", path.string())) << "\n";
    return false;
  }
  return true;
}

}  // namespace

std::filesystem::path csv_path_for(const std::filesystem::path& base, std::optional<double> group_snr_db) {
  if (!group_snr_db) return base;
  std::filesystem::path p = base;
  p.replace_filename(fmt::format("{}_snr{}dB{}", base.stem().string(), *group_snr_db, base.extension().string()));
  return p;
}

std::string format_csv(const ExperimentResult& result, std::uint64_t seed, std::optional<double> group_snr_db) {
  std::string csv = "sweep_value,policy,mean_bits,stderr_bits,n_realizations,seed\n";
  for (const auto& point : result.points) {
    if (point.point.group_snr_db != group_snr_db) continue;
    for (const auto& s : point.policies) {
      if (!s.has_stats()) continue;
      csv += fmt::format("{},{},{:.6f},{:.6f},{},{}\n", point.point.value, policy_name(s.policy), s.mean_bits,
                         s.stderr_bits, s.n_realizations, seed);
    }
  }
  return csv;
}

std::string summary_line(const SweepAxis axis, const PointResult& point) {
  std::string line = axis == SweepAxis::none ? std::string("point") : fmt::format("{}={}", axis_name(axis), point.point.value);
  if (point.point.group_snr_db) line += fmt::format(" (snr_db={})", *point.point.group_snr_db);
  for (const auto& s : point.policies) {
    if (s.skipped) {
      line += fmt::format(" {}=skipped", policy_name(s.policy));
    } else if (!s.error.empty()) {
      line += fmt::format(" {}=error", policy_name(s.policy));
    } else {
      line += fmt::format(" {}={:.6g}(se {:.2g})", policy_name(s.policy), s.mean_bits, s.stderr_bits);
    }
  }
  if (point.dp_predicted_bits) line += fmt::format(" dp_forecast={:.6g}", *point.dp_predicted_bits);
  return line;
}

int cmd_run(const std::filesystem::path& config_path, const RunFlags& flags, std::ostream& out, std::ostream& err) {
  RunConfig config;
  try {
    const auto overrides = overrides_from(flags);
    config = load_config(config_path, overrides);
  } catch (const ConfigError& e) {
    err << error_line(kConfigError, "config", e.what(), e.key_path()) << "\n";
    return kConfigError;
  }

  RunOptions options;
  options.threads = flags.threads.value_or(1);
  if (options.threads < 1) {
    err << error_line(kConfigError, "config", "--threads must be >= 1", "--threads") << "\n";
    return kConfigError;
  }
  if (config.table_cache_dir) options.table_cache_dir = *config.table_cache_dir;

  ExperimentResult result;
  try {
    result = run_experiment(config.experiment, options);
  } catch (const ConsistencyError& e) {
    err << error_line(kFailure, "consistency", e.what()) << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    err << error_line(kFailure, "runtime", e.what()) << "\n";
    return kFailure;
  }

  for (const auto& point : result.points) out << summary_line(config.experiment.sweep.axis, point) << "\n";

  const std::filesystem::path base = config.csv ? std::filesystem::path(*config.csv)
                                                : std::filesystem::path(config.name + ".csv");
  std::vector<std::optional<double>> groups;
  for (const auto& point : result.points)
    if (std::find(groups.begin(), groups.end(), point.point.group_snr_db) == groups.end())
      groups.push_back(point.point.group_snr_db);
  for (const auto& group : groups) {
    const auto path = csv_path_for(base, group);
    if (!write_file(path, format_csv(result, config.experiment.seed, group), err)) return kFailure;
    out << "wrote " << path.string() << "\n";
  }

  int code = kOk;
  for (const auto& point : result.points) {
    for (const auto& s : point.policies) {
      if (s.error.empty()) continue;
      if (s.capacity_error) {
        err << error_line(kCapacityError, "capacity", fmt::format("{}; {}", s.error, kCapacityHint)) << "\n";
        code = kCapacityError;
      } else {
        err << error_line(kFailure, "policy", s.error) << "\n";
        if (code == kOk) code = kFailure;
      }
    }
  }
  return code;
}

int cmd_verify(const std::filesystem::path& config_path, std::span<const Override> overrides, std::size_t threads,
               std::ostream& out, std::ostream& err) {
  RunConfig config;
  try {
    config = load_config(config_path, overrides);
  } catch (const ConfigError& e) {
    err << error_line(kConfigError, "config", e.what(), e.key_path()) << "\n";
    return kConfigError;
  }

  std::vector<PropertyResult> results;
  try {
    results = verify_properties(config, std::max<std::size_t>(threads, 1));
  } catch (const std::exception& e) {
    err << error_line(kFailure, "runtime", e.what()) << "\n";
    return kFailure;
  }

  std::vector<std::string> failures;
  for (const auto& r : results) {
    const std::string_view status = r.skipped ? "SKIP" : (r.passed ? "PASS" : "FAIL");
    out << fmt::format("{} {}", status, r.name);
    if (!r.detail.empty()) out << ": " << r.detail;
    out << "\n";
    if (!r.skipped && !r.passed) failures.push_back(r.name);
  }
  if (failures.empty()) return kOk;
  err << error_line(kFailure, "verify", fmt::format("failed: {}", fmt::join(failures, ", "))) << "\n";
  return kFailure;
}

}  // namespace mac_alloc::cli
