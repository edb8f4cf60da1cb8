#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mac_alloc/model.hpp"

namespace mac_alloc {

struct DpConfig {
  std::size_t energy_grid_points = 51;
  std::size_t quadrature_order = 16;
  std::size_t inner_opt_points = 33;
  /// Refuse to build when grid_points^N * T exceeds this many cells.
  std::size_t max_cells = 10'000'000;

  void validate() const;

  friend bool operator==(const DpConfig&, const DpConfig&) = default;
};

/// Expected future throughput on a uniform per-user energy grid over [0, E_i].
/// Slot tables are stored for zero-based slots 1..T-1 (the values needed by the
/// decisions at slots 0..T-2); the slot-0 value is only kept at the full-budget corner.
class ValueTable {
 public:
  ValueTable() = default;
  ValueTable(std::vector<double> budgets, std::size_t horizon, std::size_t grid_points);

  std::size_t n_users() const noexcept { return budgets_.size(); }
  std::size_t horizon() const noexcept { return horizon_; }
  std::size_t grid_points() const noexcept { return grid_points_; }
  std::size_t cells() const noexcept { return cells_; }
  const std::vector<double>& budgets() const noexcept { return budgets_; }

  /// Energy level of grid index k along user i's axis.
  double level(std::size_t user, std::size_t k) const;
  /// Decodes a flat cell index into per-user energy levels.
  std::vector<double> cell_levels(std::size_t cell) const;

  /// Values for zero-based slot t in [1, T-1], flat row-major (user 0 slowest).
  std::span<double> slot(std::size_t t);
  std::span<const double> slot(std::size_t t) const;

  /// Multilinear interpolation of slot t's table; levels outside the grid are clamped.
  double interpolate(std::size_t t, std::span<const double> levels) const;

  /// Ubar at slot 0 evaluated at the full budgets: the DP's own throughput forecast.
  double initial_value() const noexcept { return initial_value_; }
  void set_initial_value(double v) noexcept { initial_value_ = v; }

  std::vector<std::uint8_t> serialize(std::uint64_t key) const;
  /// Returns nullopt if the bytes are not a table for `key`.
  static std::optional<ValueTable> deserialize(std::span<const std::uint8_t> bytes, std::uint64_t key);

 private:
  std::vector<double> budgets_;
  std::size_t horizon_ = 0;
  std::size_t grid_points_ = 0;
  std::size_t cells_ = 0;
  std::vector<std::size_t> strides_;
  std::vector<double> values_;
  double initial_value_ = 0.0;
};

/// Backward induction over the Bellman recursion. `threads` caps the workers that
/// share the cells of one slot. Throws CapacityError when the grid is too large.
ValueTable build_value_tables(const SystemParams& params, const DpConfig& config, std::size_t threads = 1);

/// Hash of everything that determines a value table, for cache file names.
std::uint64_t value_table_key(const SystemParams& params, const DpConfig& config);

/// Loads the table from `dir` when a matching cache file exists, otherwise builds and
/// stores it there.
ValueTable cached_value_tables(const SystemParams& params, const DpConfig& config,
                               const std::filesystem::path& dir, std::size_t threads = 1);

/// Checks monotonicity in energy, zero at the empty corner and monotonicity in the
/// remaining horizon. Returns an empty string when every invariant holds.
std::string check_value_table(const ValueTable& table, double tolerance = 1e-9);

/// Executes the value tables: at each slot before the last it maximizes the current
/// rate plus the interpolated future value; at the last slot it spends everything.
class DpPolicy final : public CausalPolicy {
 public:
  DpPolicy(ValueTable tables, SystemParams params, DpConfig config);

  std::vector<double> allocate(std::size_t t, const EnergyState& state,
                               std::span<const double> gains) const override;

  const ValueTable& tables() const noexcept { return tables_; }

 private:
  ValueTable tables_;
  SystemParams params_;
  DpConfig config_;
};

}  // namespace mac_alloc
