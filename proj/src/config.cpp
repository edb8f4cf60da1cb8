#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mac_alloc/cli.hpp"

namespace mac_alloc::cli {
namespace {

using nlohmann::json;

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : fmt::format("{}.{}", path, key);
}

void expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
}

void check_keys(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
  expect_object(j, path);
  for (const auto& [key, value] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(join(path, key), "unknown key");
}

const json& required(const json& j, const std::string& path, std::string_view key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigError(join(path, key), "missing required key");
  return *it;
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path, "expected a finite number");
  return x;
}

double as_positive(const json& v, const std::string& path) {
  const double x = as_number(v, path);
  if (!(x > 0.0)) throw ConfigError(path, "must be > 0");
  return x;
}

std::uint64_t as_unsigned(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) throw ConfigError(path, "must be >= 0");
  throw ConfigError(path, "expected a non-negative integer");
}

std::size_t as_count(const json& v, const std::string& path, std::size_t min) {
  const std::uint64_t x = as_unsigned(v, path);
  if (x < min) throw ConfigError(path, fmt::format("must be >= {}", min));
  if (x > std::numeric_limits<std::size_t>::max()) throw ConfigError(path, "too large");
  return static_cast<std::size_t>(x);
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

std::vector<double> as_numbers(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < v.size(); ++k) out.push_back(as_number(v[k], fmt::format("{}[{}]", path, k)));
  return out;
}

FadingDistribution parse_fading(const json& j, const std::string& path) {
  expect_object(j, path);
  const std::string kind = as_string(required(j, path, "kind"), join(path, "kind"));
  try {
    if (kind == "exponential") {
      check_keys(j, path, {"kind", "rate"});
      return FadingDistribution::exponential(as_number(required(j, path, "rate"), join(path, "rate")));
    }
    if (kind == "deterministic") {
      check_keys(j, path, {"kind", "value"});
      return FadingDistribution::deterministic(as_number(required(j, path, "value"), join(path, "value")));
    }
    if (kind == "tabulated") {
      check_keys(j, path, {"kind", "u", "x"});
      return FadingDistribution::tabulated(as_numbers(required(j, path, "u"), join(path, "u")),
                                           as_numbers(required(j, path, "x"), join(path, "x")));
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  throw ConfigError(join(path, "kind"), fmt::format("unknown fading kind '{}'", kind));
}

json fading_json(const FadingDistribution& dist) {
  return std::visit(
      [](const auto& k) -> json {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Exponential>) return {{"kind", "exponential"}, {"rate", k.rate}};
        else if constexpr (std::is_same_v<K, Deterministic>) return {{"kind", "deterministic"}, {"value", k.value}};
        else return {{"kind", "tabulated"}, {"u", k.u}, {"x", k.x}};
      },
      dist.kind());
}

void parse_system(const json& j, ExperimentSpec& spec) {
  const std::string path = "system";
  check_keys(j, path,
             {"n_users", "horizon", "bandwidth_hz", "slot_seconds", "noise_watts", "energy_budgets", "fading"});
  SystemParams& p = spec.params;
  p.n_users = as_count(required(j, path, "n_users"), "system.n_users", 1);
  p.horizon = as_count(required(j, path, "horizon"), "system.horizon", 1);
  p.bandwidth_hz = as_positive(required(j, path, "bandwidth_hz"), "system.bandwidth_hz");
  p.slot_seconds = as_positive(required(j, path, "slot_seconds"), "system.slot_seconds");
  p.noise_watts = as_positive(required(j, path, "noise_watts"), "system.noise_watts");

  if (const auto it = j.find("energy_budgets"); it != j.end()) {
    p.energy_budgets = as_numbers(*it, "system.energy_budgets");
    if (p.energy_budgets.size() != p.n_users)
      throw ConfigError("system.energy_budgets", fmt::format("expected {} entries", p.n_users));
    for (std::size_t i = 0; i < p.energy_budgets.size(); ++i)
      if (p.energy_budgets[i] < 0.0) throw ConfigError(fmt::format("system.energy_budgets[{}]", i), "must be >= 0");
  }

  const json& fading = required(j, path, "fading");
  if (fading.is_array()) {
    if (fading.size() != p.n_users) throw ConfigError("system.fading", fmt::format("expected {} entries", p.n_users));
    for (std::size_t i = 0; i < fading.size(); ++i)
      p.fading.push_back(parse_fading(fading[i], fmt::format("system.fading[{}]", i)));
  } else {
    p.fading.assign(p.n_users, parse_fading(fading, "system.fading"));
  }
}

void parse_sweep(const json& j, ExperimentSpec& spec) {
  const std::string path = "experiment.sweep";
  check_keys(j, path, {"axis", "values", "snr_db"});
  try {
    spec.sweep.axis = parse_axis(as_string(required(j, path, "axis"), "experiment.sweep.axis"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("experiment.sweep.axis", e.what());
  }
  if (const auto it = j.find("values"); it != j.end()) spec.sweep.values = as_numbers(*it, "experiment.sweep.values");
  if (const auto it = j.find("snr_db"); it != j.end()) {
    if (spec.sweep.axis != SweepAxis::n_users)
      throw ConfigError("experiment.sweep.snr_db", "only valid with the n_users axis");
    spec.sweep.snr_db = as_numbers(*it, "experiment.sweep.snr_db");
  }
  if (spec.sweep.axis != SweepAxis::none && spec.sweep.values.empty())
    throw ConfigError("experiment.sweep.values", "must list at least one value");
  if (spec.sweep.axis == SweepAxis::none && !spec.sweep.values.empty())
    throw ConfigError("experiment.sweep.values", "not used with axis 'none'");
}

void parse_experiment(const json& j, ExperimentSpec& spec) {
  const std::string path = "experiment";
  check_keys(j, path, {"policies", "n_realizations", "seed", "sweep", "dp_max_users"});
  const json& policies = required(j, path, "policies");
  if (!policies.is_array() || policies.empty())
    throw ConfigError("experiment.policies", "expected a non-empty array of policy names");
  for (std::size_t k = 0; k < policies.size(); ++k) {
    const std::string key = fmt::format("experiment.policies[{}]", k);
    PolicyKind kind{};
    try {
      kind = parse_policy(as_string(policies[k], key));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, e.what());
    }
    if (std::find(spec.policies.begin(), spec.policies.end(), kind) != spec.policies.end())
      throw ConfigError(key, "duplicate policy");
    spec.policies.push_back(kind);
  }
  spec.n_realizations = as_count(required(j, path, "n_realizations"), "experiment.n_realizations", 1);
  spec.seed = as_unsigned(required(j, path, "seed"), "experiment.seed");
  if (const auto it = j.find("sweep"); it != j.end()) parse_sweep(*it, spec);
  if (const auto it = j.find("dp_max_users"); it != j.end())
    spec.dp_max_users = as_count(*it, "experiment.dp_max_users", 1);
}

void parse_solver(const json& j, ExperimentSpec& spec) {
  check_keys(j, "solver", {"iwf", "dp"});
  if (const auto it = j.find("iwf"); it != j.end()) {
    const std::string path = "solver.iwf";
    check_keys(*it, path, {"max_iters", "objective_tol"});
    if (const auto v = it->find("max_iters"); v != it->end())
      spec.iwf.max_iters = as_count(*v, "solver.iwf.max_iters", 1);
    if (const auto v = it->find("objective_tol"); v != it->end()) {
      spec.iwf.objective_tol = as_positive(*v, "solver.iwf.objective_tol");
    }
  }
  if (const auto it = j.find("dp"); it != j.end()) {
    const std::string path = "solver.dp";
    check_keys(*it, path, {"energy_grid_points", "quadrature_order", "inner_opt_points", "max_cells"});
    if (const auto v = it->find("energy_grid_points"); v != it->end())
      spec.dp.energy_grid_points = as_count(*v, "solver.dp.energy_grid_points", 2);
    if (const auto v = it->find("quadrature_order"); v != it->end())
      spec.dp.quadrature_order = as_count(*v, "solver.dp.quadrature_order", 1);
    if (const auto v = it->find("inner_opt_points"); v != it->end())
      spec.dp.inner_opt_points = as_count(*v, "solver.dp.inner_opt_points", 2);
    if (const auto v = it->find("max_cells"); v != it->end())
      spec.dp.max_cells = as_count(*v, "solver.dp.max_cells", 1);
  }
}

void parse_output(const json& j, RunConfig& config) {
  check_keys(j, "output", {"csv", "table_cache_dir"});
  if (const auto it = j.find("csv"); it != j.end()) config.csv = as_string(*it, "output.csv");
  if (const auto it = j.find("table_cache_dir"); it != j.end())
    config.table_cache_dir = as_string(*it, "output.table_cache_dir");
}

// Budgets may only be left out when every sweep point derives them from an SNR.
void check_resolvable(const ExperimentSpec& spec) {
  const bool snr_budgets = spec.sweep.axis == SweepAxis::snr_db ||
                           (spec.sweep.axis == SweepAxis::n_users && !spec.sweep.snr_db.empty());
  if (!snr_budgets && spec.params.energy_budgets.empty())
    throw ConfigError("system.energy_budgets", "required unless the sweep sets budgets from SNR");
  try {
    resolve_sweep(spec);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(spec.sweep.axis == SweepAxis::none ? "system" : "experiment.sweep", e.what());
  }
}

void apply_override(json& doc, const Override& o) {
  if (o.key_path.empty()) throw ConfigError("<override>", "empty key path");
  json value;
  try {
    value = json::parse(o.value);
  } catch (const json::parse_error&) {
    value = o.value;
  }
  json* node = &doc;
  std::string path;
  std::string_view rest = o.key_path;
  while (true) {
    const auto dot = rest.find('.');
    const std::string key(rest.substr(0, dot));
    if (key.empty()) throw ConfigError(o.key_path, "malformed key path");
    if (!node->is_object()) throw ConfigError(path, "cannot override inside a non-object value");
    path = join(path, key);
    if (dot == std::string_view::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    rest.remove_prefix(dot + 1);
  }
}

}  // namespace

Override parse_override(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigError(std::string(text), "override must look like key.path=value");
  return {std::string(text.substr(0, eq)), std::string(text.substr(eq + 1))};
}

RunConfig parse_config(std::string_view json_text, std::span<const Override> overrides) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", fmt::format("invalid JSON: {}", e.what()));
  }
  for (const auto& o : overrides) apply_override(doc, o);

  check_keys(doc, "", {"name", "system", "experiment", "solver", "output"});
  RunConfig config;
  config.name = as_string(required(doc, "", "name"), "name");
  if (config.name.empty()) throw ConfigError("name", "must not be empty");
  parse_system(required(doc, "", "system"), config.experiment);
  parse_experiment(required(doc, "", "experiment"), config.experiment);
  if (const auto it = doc.find("solver"); it != doc.end()) parse_solver(*it, config.experiment);
  if (const auto it = doc.find("output"); it != doc.end()) parse_output(*it, config);
  check_resolvable(config.experiment);
  return config;
}

RunConfig load_config(const std::filesystem::path& path, std::span<const Override> overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("<file>", fmt::format("cannot read '{}'", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), overrides);
}

std::string serialize_config(const RunConfig& config) {
  const ExperimentSpec& spec = config.experiment;
  const SystemParams& p = spec.params;

  json system = {{"n_users", p.n_users},
                 {"horizon", p.horizon},
                 {"bandwidth_hz", p.bandwidth_hz},
                 {"slot_seconds", p.slot_seconds},
                 {"noise_watts", p.noise_watts}};
  if (!p.energy_budgets.empty()) system["energy_budgets"] = p.energy_budgets;
  const bool shared = std::all_of(p.fading.begin(), p.fading.end(), [&](const auto& f) { return f == p.fading[0]; });
  if (shared && !p.fading.empty()) {
    system["fading"] = fading_json(p.fading[0]);
  } else {
    system["fading"] = json::array();
    for (const auto& f : p.fading) system["fading"].push_back(fading_json(f));
  }

  json experiment = {{"policies", json::array()}, {"n_realizations", spec.n_realizations}, {"seed", spec.seed}};
  for (PolicyKind k : spec.policies) experiment["policies"].push_back(std::string(policy_name(k)));
  if (spec.sweep.axis != SweepAxis::none) {
    json sweep = {{"axis", std::string(axis_name(spec.sweep.axis))}, {"values", spec.sweep.values}};
    if (!spec.sweep.snr_db.empty()) sweep["snr_db"] = spec.sweep.snr_db;
    experiment["sweep"] = std::move(sweep);
  }
  if (spec.dp_max_users) experiment["dp_max_users"] = *spec.dp_max_users;

  json solver = {{"iwf", {{"max_iters", spec.iwf.max_iters}, {"objective_tol", spec.iwf.objective_tol}}},
                 {"dp",
                  {{"energy_grid_points", spec.dp.energy_grid_points},
                   {"quadrature_order", spec.dp.quadrature_order},
                   {"inner_opt_points", spec.dp.inner_opt_points},
                   {"max_cells", spec.dp.max_cells}}}};

  json doc = {{"name", config.name}, {"system", system}, {"experiment", experiment}, {"solver", solver}};
  json output = json::object();
  if (config.csv) output["csv"] = *config.csv;
  if (config.table_cache_dir) output["table_cache_dir"] = *config.table_cache_dir;
  if (!output.empty()) doc["output"] = std::move(output);
  return doc.dump(2) + "\n";
}

std::vector<Override> overrides_from(const RunFlags& flags) {
  std::vector<Override> out;
  if (flags.seed) out.push_back({"experiment.seed", std::to_string(*flags.seed)});
  if (flags.n_realizations) out.push_back({"experiment.n_realizations", std::to_string(*flags.n_realizations)});
  if (flags.out) out.push_back({"output.csv", json(*flags.out).dump()});
  if (flags.policies) {
    json list = json::array();
    std::string_view rest = *flags.policies;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      list.push_back(std::string(rest.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    out.push_back({"experiment.policies", list.dump()});
  }
  out.insert(out.end(), flags.sets.begin(), flags.sets.end());
  return out;
}

std::string error_line(int code, std::string_view kind, std::string_view message, std::string_view key_path) {
  std::string line = fmt::format("error code={} kind={}", code, kind);
  if (!key_path.empty()) line += fmt::format(" key={}", key_path);
  line += fmt::format(" message={}", json(std::string(message)).dump());
  return line;
}

}  // namespace mac_alloc::cli
