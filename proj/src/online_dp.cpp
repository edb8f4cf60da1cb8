#include "mac_alloc/online_dp.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

#include "mac_alloc/errors.hpp"
#include "mac_alloc/fading.hpp"
#include "mac_alloc/parallel.hpp"

namespace mac_alloc {
namespace {

constexpr char kMagic[8] = {'M', 'A', 'C', 'D', 'P', 'V', 'T', '\0'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr double kNegligibleWeight = 1e-15;

struct ProductNode {
  std::vector<double> gains;
  double weight;
};

std::vector<ProductNode> product_quadrature(const SystemParams& params, std::size_t order) {
  std::vector<ProductNode> nodes{{{}, 1.0}};
  for (const auto& dist : params.fading) {
    const auto rule = quadrature_nodes(dist, order);
    std::vector<ProductNode> next;
    next.reserve(nodes.size() * rule.size());
    for (const auto& partial : nodes) {
      for (const auto& q : rule) {
        ProductNode n = partial;
        n.gains.push_back(q.gain);
        n.weight *= q.weight;
        next.push_back(std::move(n));
      }
    }
    nodes = std::move(next);
  }
  // Products of far-tail weights carry no measurable mass; dropping them roughly
  // halves the work for two users.
  std::erase_if(nodes, [](const ProductNode& n) { return n.weight < kNegligibleWeight; });
  return nodes;
}

// Exhaustive product grid of spending vectors 0 <= e <= eps. Candidates are laid
// out as rows (all users but the last) times the last user's levels. The future
// value of each candidate does not depend on the gains, so it is cached together
// with its row and block maxima; those give upper bounds that let the scan skip
// whole blocks without changing the argmax.
class InnerSearch {
 public:
  InnerSearch(const SystemParams& params, const ValueTable& table, std::size_t next_slot,
              std::span<const double> eps, std::size_t points)
      : params_(params), table_(table), next_slot_(next_slot), eps_(eps.begin(), eps.end()) {
    const std::size_t n = eps_.size();
    counts_.resize(n);
    steps_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      counts_[i] = eps_[i] > 0.0 ? points : 1;
      steps_[i] = eps_[i] > 0.0 ? eps_[i] / static_cast<double>(points - 1) : 0.0;
    }
    cols_ = counts_[n - 1];
    rows_ = 1;
    for (std::size_t i = 0; i + 1 < n; ++i) rows_ *= counts_[i];
    blocks_ = (cols_ + kBlock - 1) / kBlock;

    last_e_.resize(cols_);
    for (std::size_t b = 0; b < cols_; ++b) last_e_[b] = candidate_level(n - 1, b);
    row_e_.resize(rows_ * (n - 1));
    row_total_.resize(rows_);
    future_.resize(rows_ * cols_);
    block_max_.resize(rows_ * blocks_);
    row_max_.resize(rows_);

    std::vector<std::size_t> digit(n, 0);
    std::vector<double> remaining(n);
    for (std::size_t r = 0; r < rows_; ++r) {
      double total = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double e = candidate_level(i, digit[i]);
        row_e_[r * (n - 1) + i] = e;
        remaining[i] = std::max(0.0, eps_[i] - e);
        total += e;
      }
      row_total_[r] = total;
      double row_best = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < blocks_; ++k) {
        double block_best = -std::numeric_limits<double>::infinity();
        for (std::size_t b = k * kBlock; b < std::min(cols_, (k + 1) * kBlock); ++b) {
          remaining[n - 1] = std::max(0.0, eps_[n - 1] - last_e_[b]);
          const double f = table_.interpolate(next_slot_, remaining);
          future_[r * cols_ + b] = f;
          block_best = std::max(block_best, f);
        }
        block_max_[r * blocks_ + k] = block_best;
        row_best = std::max(row_best, block_best);
      }
      row_max_[r] = row_best;
      for (std::size_t i = n - 1; i-- > 0;) {
        if (++digit[i] < counts_[i]) break;
        digit[i] = 0;
      }
    }
  }

  struct Choice {
    double value;
    std::vector<double> energies;
  };

  /// Candidate index (row * cols + col) of the previous winner, used as a warm start.
  using Hint = std::size_t;

  Choice maximize(std::span<const double> gains, Hint* hint = nullptr) const {
    const std::size_t n = eps_.size();
    const double inv_noise = 1.0 / params_.noise_energy();
    const double scale = params_.rate_scale() / std::numbers::ln2;
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = gains[i] * inv_noise;
    std::vector<double> v(cols_);
    for (std::size_t b = 0; b < cols_; ++b) v[b] = g[n - 1] * last_e_[b];
    auto row_gain = [&](std::size_t r) {
      double s = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) s += g[i] * row_e_[r * (n - 1) + i];
      return s;
    };

    double best = -std::numeric_limits<double>::infinity();
    double best_total = 0.0;
    std::size_t best_index = 0;
    // Ties go to the larger total spend, then to the earlier candidate, so the
    // winner does not depend on the warm start.
    auto consider = [&](std::size_t r, std::size_t b, double s_row) {
      const std::size_t index = r * cols_ + b;
      const double value = scale * std::log(1.0 + (s_row + v[b])) + future_[index];
      const double total = row_total_[r] + last_e_[b];
      if (value > best || (value == best && (total > best_total || (total == best_total && index < best_index)))) {
        best = value;
        best_total = total;
        best_index = index;
      }
    };
    // Bounds are compared with a little slack so that libm rounding can never prune
    // a candidate that would win or tie.
    auto pruned = [&](double bound) { return bound < best - 1e-12 * std::abs(best); };

    if (hint && *hint < rows_ * cols_) consider(*hint / cols_, *hint % cols_, row_gain(*hint / cols_));
    for (std::size_t r = 0; r < rows_; ++r) {
      const double s_row = row_gain(r);
      if (pruned(scale * std::log(1.0 + (s_row + v[cols_ - 1])) + row_max_[r])) continue;
      for (std::size_t k = 0; k < blocks_; ++k) {
        const std::size_t lo = k * kBlock;
        const std::size_t hi = std::min(cols_, lo + kBlock);
        if (pruned(scale * std::log(1.0 + (s_row + v[hi - 1])) + block_max_[r * blocks_ + k])) continue;
        for (std::size_t b = lo; b < hi; ++b) consider(r, b, s_row);
      }
    }
    if (hint) *hint = best_index;

    const std::size_t best_r = best_index / cols_;
    Choice choice{best, std::vector<double>(n)};
    for (std::size_t i = 0; i + 1 < n; ++i) choice.energies[i] = row_e_[best_r * (n - 1) + i];
    choice.energies[n - 1] = last_e_[best_index % cols_];
    refine(g, scale, choice, best_total);
    return choice;
  }

 private:
  static constexpr std::size_t kBlock = 8;

  double candidate_level(std::size_t user, std::size_t k) const {
    return k + 1 == counts_[user] ? eps_[user] : static_cast<double>(k) * steps_[user];
  }

  // One pass over quarter-step offsets within one coarse step of the incumbent.
  void refine(std::span<const double> g, double scale, Choice& choice, double best_total) const {
    const std::size_t n = eps_.size();
    constexpr int kHalfWidth = 3;
    constexpr int kSpan = 2 * kHalfWidth + 1;
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= counts_[i] > 1 ? kSpan : 1;

    const std::vector<double> center = choice.energies;
    std::vector<double> e(n), remaining(n);
    for (std::size_t c = 0; c < combos; ++c) {
      std::size_t code = c;
      bool is_center = true;
      for (std::size_t i = n; i-- > 0;) {
        int offset = 0;
        if (counts_[i] > 1) {
          offset = static_cast<int>(code % kSpan) - kHalfWidth;
          code /= kSpan;
        }
        is_center = is_center && offset == 0;
        e[i] = std::clamp(center[i] + 0.25 * offset * steps_[i], 0.0, eps_[i]);
      }
      if (is_center) continue;
      double s = 0.0, total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        s += g[i] * e[i];
        total += e[i];
        remaining[i] = std::max(0.0, eps_[i] - e[i]);
      }
      const double value = scale * std::log(1.0 + s) + table_.interpolate(next_slot_, remaining);
      if (value > choice.value || (value == choice.value && total > best_total)) {
        choice.value = value;
        choice.energies = e;
        best_total = total;
      }
    }
  }

  const SystemParams& params_;
  const ValueTable& table_;
  std::size_t next_slot_;
  std::vector<double> eps_;
  std::vector<std::size_t> counts_;
  std::vector<double> steps_;
  std::size_t rows_ = 1, cols_ = 1, blocks_ = 1;
  std::vector<double> last_e_;
  std::vector<double> row_e_;
  std::vector<double> row_total_;
  std::vector<double> future_;
  std::vector<double> block_max_;
  std::vector<double> row_max_;
};

double expected_terminal_rate(const SystemParams& params, const std::vector<ProductNode>& nodes,
                              std::span<const double> eps) {
  double acc = 0.0;
  for (const auto& node : nodes) acc += node.weight * sum_throughput(params, eps, node.gains);
  return acc;
}

double expected_decision_value(const SystemParams& params, const ValueTable& table, std::size_t next_slot,
                               const std::vector<ProductNode>& nodes, std::span<const double> eps,
                               std::size_t inner_points) {
  const InnerSearch search(params, table, next_slot, eps, inner_points);
  InnerSearch::Hint hint = 0;
  double acc = 0.0;
  for (const auto& node : nodes) acc += node.weight * search.maximize(node.gains, &hint).value;
  return acc;
}

// Running max along every axis. More energy can always mimic less energy by
// holding the surplus, so the true table is monotone; this removes grid artifacts.
void monotone_envelope(const ValueTable& table, std::span<double> values) {
  const std::size_t n = table.n_users();
  const std::size_t m = table.grid_points();
  std::size_t stride = 1;
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t cell = 0; cell < values.size(); ++cell) {
      if ((cell / stride) % m == 0) continue;
      values[cell] = std::max(values[cell], values[cell - stride]);
    }
    stride *= m;
  }
}

void append_bytes(std::vector<std::uint8_t>& out, const void* data, std::size_t size) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  out.insert(out.end(), p, p + size);
}

template <class T>
void append(std::vector<std::uint8_t>& out, T value) {
  append_bytes(out, &value, sizeof(T));
}

template <class T>
bool read(std::span<const std::uint8_t>& in, T& value) {
  if (in.size() < sizeof(T)) return false;
  std::memcpy(&value, in.data(), sizeof(T));
  in = in.subspan(sizeof(T));
  return true;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::atomic<int> clamp_warnings{0};

}  // namespace

void DpConfig::validate() const {
  if (energy_grid_points < 2 || inner_opt_points < 2 || quadrature_order < 1)
    throw std::invalid_argument("dp config: grid and inner points must be >= 2, quadrature order >= 1");
}

ValueTable::ValueTable(std::vector<double> budgets, std::size_t horizon, std::size_t grid_points)
    : budgets_(std::move(budgets)), horizon_(horizon), grid_points_(grid_points) {
  cells_ = 1;
  strides_.assign(budgets_.size(), 1);
  for (std::size_t i = budgets_.size(); i-- > 0;) {
    strides_[i] = cells_;
    cells_ *= grid_points_;
  }
  values_.assign(cells_ * (horizon_ > 0 ? horizon_ - 1 : 0), 0.0);
}

double ValueTable::level(std::size_t user, std::size_t k) const {
  if (k + 1 == grid_points_) return budgets_[user];
  return budgets_[user] * static_cast<double>(k) / static_cast<double>(grid_points_ - 1);
}

std::vector<double> ValueTable::cell_levels(std::size_t cell) const {
  std::vector<double> out(budgets_.size());
  for (std::size_t i = 0; i < budgets_.size(); ++i) out[i] = level(i, (cell / strides_[i]) % grid_points_);
  return out;
}

std::span<double> ValueTable::slot(std::size_t t) {
  if (t < 1 || t >= horizon_) throw std::out_of_range(fmt::format("value table has no slot {}", t));
  return {values_.data() + (t - 1) * cells_, cells_};
}

std::span<const double> ValueTable::slot(std::size_t t) const {
  if (t < 1 || t >= horizon_) throw std::out_of_range(fmt::format("value table has no slot {}", t));
  return {values_.data() + (t - 1) * cells_, cells_};
}

double ValueTable::interpolate(std::size_t t, std::span<const double> levels) const {
  const auto values = slot(t);
  const std::size_t n = budgets_.size();
  const double last = static_cast<double>(grid_points_ - 1);

  // Base corner index and fractional offsets along each axis.
  std::size_t base = 0;
  double frac[8];
  std::vector<double> frac_heap;
  double* f = frac;
  if (n > 8) {
    frac_heap.resize(n);
    f = frac_heap.data();
  }
  for (std::size_t i = 0; i < n; ++i) {
    double pos = budgets_[i] > 0.0 ? levels[i] / budgets_[i] * last : 0.0;
    pos = std::clamp(pos, 0.0, last);
    auto k = static_cast<std::size_t>(pos);
    if (k + 1 >= grid_points_) k = grid_points_ - 2;
    f[i] = pos - static_cast<double>(k);
    base += k * strides_[i];
  }

  double acc = 0.0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    double w = 1.0;
    std::size_t index = base;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1U) {
        w *= f[i];
        index += strides_[i];
      } else {
        w *= 1.0 - f[i];
      }
    }
    if (w != 0.0) acc += w * values[index];
  }
  return acc;
}

std::vector<std::uint8_t> ValueTable::serialize(std::uint64_t key) const {
  std::vector<std::uint8_t> out;
  append_bytes(out, kMagic, sizeof(kMagic));
  append(out, kFormatVersion);
  append(out, key);
  append<std::uint64_t>(out, budgets_.size());
  append<std::uint64_t>(out, horizon_);
  append<std::uint64_t>(out, grid_points_);
  for (double b : budgets_) append(out, b);
  append(out, initial_value_);
  append<std::uint64_t>(out, values_.size());
  append_bytes(out, values_.data(), values_.size() * sizeof(double));
  return out;
}

std::optional<ValueTable> ValueTable::deserialize(std::span<const std::uint8_t> in, std::uint64_t key) {
  if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) return std::nullopt;
  in = in.subspan(sizeof(kMagic));
  std::uint32_t version = 0;
  std::uint64_t stored_key = 0, n = 0, horizon = 0, points = 0, count = 0;
  if (!read(in, version) || version != kFormatVersion) return std::nullopt;
  if (!read(in, stored_key) || stored_key != key) return std::nullopt;
  if (!read(in, n) || !read(in, horizon) || !read(in, points) || n == 0 || n > 16 || points < 2)
    return std::nullopt;
  std::vector<double> budgets(n);
  for (auto& b : budgets)
    if (!read(in, b)) return std::nullopt;
  double initial = 0.0;
  if (!read(in, initial)) return std::nullopt;
  ValueTable table(std::move(budgets), horizon, points);
  if (!read(in, count) || count != table.values_.size() || in.size() != count * sizeof(double)) return std::nullopt;
  std::memcpy(table.values_.data(), in.data(), in.size());
  table.initial_value_ = initial;
  return table;
}

ValueTable build_value_tables(const SystemParams& params, const DpConfig& config, std::size_t threads) {
  params.validate();
  config.validate();

  // Overflow-safe check of grid_points^N * T against the cell budget.
  double cells = static_cast<double>(params.horizon);
  for (std::size_t i = 0; i < params.n_users; ++i) cells *= static_cast<double>(config.energy_grid_points);
  if (cells > static_cast<double>(config.max_cells))
    throw CapacityError(fmt::format(
        "DP grid needs {:.3g} cells (limit {}): reduce energy_grid_points or use the cec policy for N = {}",
        cells, config.max_cells, params.n_users));

  ValueTable table(params.energy_budgets, params.horizon, config.energy_grid_points);
  const auto nodes = product_quadrature(params, config.quadrature_order);
  const std::size_t last = params.horizon - 1;

  if (params.horizon == 1) {
    table.set_initial_value(expected_terminal_rate(params, nodes, params.energy_budgets));
    return table;
  }

  {
    auto values = table.slot(last);
    parallel_for(table.cells(), threads, [&](std::size_t cell) {
      values[cell] = expected_terminal_rate(params, nodes, table.cell_levels(cell));
    });
    monotone_envelope(table, values);
  }
  for (std::size_t t = last; t-- > 1;) {
    auto values = table.slot(t);
    parallel_for(table.cells(), threads, [&](std::size_t cell) {
      values[cell] =
          expected_decision_value(params, table, t + 1, nodes, table.cell_levels(cell), config.inner_opt_points);
    });
    monotone_envelope(table, values);
  }
  table.set_initial_value(
      expected_decision_value(params, table, 1, nodes, params.energy_budgets, config.inner_opt_points));
  return table;
}

std::uint64_t value_table_key(const SystemParams& params, const DpConfig& config) {
  std::string text = fmt::format("v{};N={};T={};W={:a};tau={:a};No={:a};M={};Q={};P={}", kFormatVersion,
                                 params.n_users, params.horizon, params.bandwidth_hz, params.slot_seconds,
                                 params.noise_watts, config.energy_grid_points, config.quadrature_order,
                                 config.inner_opt_points);
  for (std::size_t i = 0; i < params.n_users; ++i) {
    text += fmt::format(";E{}={:a}", i, params.energy_budgets[i]);
    const auto& kind = params.fading[i].kind();
    if (const auto* e = std::get_if<Exponential>(&kind)) {
      text += fmt::format(";exp:{:a}", e->rate);
    } else if (const auto* d = std::get_if<Deterministic>(&kind)) {
      text += fmt::format(";det:{:a}", d->value);
    } else if (const auto* tab = std::get_if<TabulatedInverseCdf>(&kind)) {
      text += ";tab";
      for (std::size_t k = 0; k < tab->u.size(); ++k) text += fmt::format(":{:a},{:a}", tab->u[k], tab->x[k]);
    }
  }
  return fnv1a(text);
}

ValueTable cached_value_tables(const SystemParams& params, const DpConfig& config,
                               const std::filesystem::path& dir, std::size_t threads) {
  const std::uint64_t key = value_table_key(params, config);
  const auto path = dir / fmt::format("dp_{:016x}.bin", key);
  if (std::ifstream in{path, std::ios::binary}) {
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (auto table = ValueTable::deserialize(bytes, key)) return std::move(*table);
  }
  ValueTable table = build_value_tables(params, config, threads);
  std::filesystem::create_directories(dir);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out{tmp, std::ios::binary | std::ios::trunc};
    const auto bytes = table.serialize(key);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(fmt::format("cannot write value table cache {}", tmp));
  }
  std::filesystem::rename(tmp, path);
  return table;
}

std::string check_value_table(const ValueTable& table, double tolerance) {
  const std::size_t n = table.n_users();
  const std::size_t m = table.grid_points();
  for (std::size_t t = 1; t < table.horizon(); ++t) {
    const auto values = table.slot(t);
    if (std::abs(values[0]) > tolerance) return fmt::format("slot {}: value {} at the empty state", t, values[0]);
    std::size_t stride = 1;
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t cell = 0; cell < values.size(); ++cell) {
        if ((cell / stride) % m == 0) continue;
        if (values[cell] < values[cell - stride] - tolerance * std::max(1.0, std::abs(values[cell])))
          return fmt::format("slot {}: decreasing along user {} at cell {}", t, i, cell);
      }
      stride *= m;
    }
    if (t + 1 < table.horizon()) {
      const auto later = table.slot(t + 1);
      for (std::size_t cell = 0; cell < values.size(); ++cell)
        if (values[cell] < later[cell] - tolerance * std::max(1.0, std::abs(values[cell])))
          return fmt::format("slot {}: below slot {} at cell {}", t, t + 1, cell);
    }
  }
  if (table.horizon() > 1) {
    const auto first = table.slot(1);
    const double corner = first[first.size() - 1];
    if (table.initial_value() < corner - tolerance * std::max(1.0, corner))
      return fmt::format("initial value {} below slot 1 corner {}", table.initial_value(), corner);
  }
  return {};
}

DpPolicy::DpPolicy(ValueTable tables, SystemParams params, DpConfig config)
    : tables_(std::move(tables)), params_(std::move(params)), config_(config) {
  params_.validate();
  config_.validate();
  if (tables_.n_users() != params_.n_users || tables_.horizon() != params_.horizon ||
      tables_.budgets() != params_.energy_budgets || tables_.grid_points() != config_.energy_grid_points)
    throw std::invalid_argument("value tables were built for different parameters");
}

std::vector<double> DpPolicy::allocate(std::size_t t, const EnergyState& state, std::span<const double> gains) const {
  if (t + 1 >= params_.horizon) return state.levels;

  std::vector<double> eps = state.levels;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double hi = params_.energy_budgets[i];
    if (eps[i] < -kEnergyTolerance || eps[i] > hi + kEnergyTolerance) {
      if (clamp_warnings.fetch_add(1) < 10)
        fmt::print(stderr, "warning: dp policy clamped user {} energy {} into [0, {}]\n", i, eps[i], hi);
    }
    eps[i] = std::clamp(eps[i], 0.0, hi);
  }

  const InnerSearch search(params_, tables_, t + 1, eps, config_.inner_opt_points);
  auto choice = search.maximize(gains);
  for (std::size_t i = 0; i < eps.size(); ++i) choice.energies[i] = std::min(choice.energies[i], state.levels[i]);
  return choice.energies;
}

}  // namespace mac_alloc
