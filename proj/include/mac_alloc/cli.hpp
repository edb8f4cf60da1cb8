#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mac_alloc/sim.hpp"

namespace mac_alloc::cli {

/// A parsed configuration file: the experiment plus where its outputs go.
struct RunConfig {
  std::string name;
  ExperimentSpec experiment;
  /// CSV destination; `<name>.csv` in the working directory when unset.
  std::optional<std::string> csv;
  /// Directory for cached DP value tables; tables are rebuilt every run when unset.
  std::optional<std::string> table_cache_dir;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Schema violation, tagged with the dotted key path it concerns.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key_path, const std::string& message)
      : std::runtime_error(key_path + ": " + message), key_path_(std::move(key_path)) {}

  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

/// Replaces the value at a dotted key path before validation. The value is read as
/// JSON when it parses as JSON and as a plain string otherwise.
struct Override {
  std::string key_path;
  std::string value;
};

/// Parses "key.path=value".
Override parse_override(std::string_view text);

RunConfig parse_config(std::string_view json_text, std::span<const Override> overrides = {});
/// Throws ConfigError with key path "<file>" when the file cannot be read.
RunConfig load_config(const std::filesystem::path& path, std::span<const Override> overrides = {});
/// Canonical JSON with every field written out; parse_config reads it back unchanged.
std::string serialize_config(const RunConfig& config);

/// CSV path for one output group: the configured path itself, or `<stem>_snr<v>dB<ext>`
/// for each SNR group of a multi-SNR user sweep.
std::filesystem::path csv_path_for(const std::filesystem::path& base, std::optional<double> group_snr_db);

/// Rows of one output group, header included, LF line endings.
std::string format_csv(const ExperimentResult& result, std::uint64_t seed, std::optional<double> group_snr_db);

/// One line per sweep point for the console.
std::string summary_line(const SweepAxis axis, const PointResult& point);

struct RunFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> out;
  std::optional<std::string> policies;
  std::optional<std::size_t> n_realizations;
  std::vector<Override> sets;
};

/// Exit codes shared by every command.
enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kCapacityError = 3 };

/// Named flags expanded to overrides on the key paths they mirror, then the --set ones.
std::vector<Override> overrides_from(const RunFlags& flags);

int cmd_run(const std::filesystem::path& config_path, const RunFlags& flags, std::ostream& out, std::ostream& err);

struct PropertyResult {
  std::string name;
  bool passed = false;
  bool skipped = false;
  std::string detail;
};

/// The reduced-scale property suite behind `verify`.
std::vector<PropertyResult> verify_properties(const RunConfig& config, std::size_t threads = 1);

int cmd_verify(const std::filesystem::path& config_path, std::span<const Override> overrides, std::size_t threads,
               std::ostream& out, std::ostream& err);

/// Machine-readable error line: `error code=<n> kind=<kind> [key=<path>] message=<json string>`.
std::string error_line(int code, std::string_view kind, std::string_view message, std::string_view key_path = {});

}  // namespace mac_alloc::cli
