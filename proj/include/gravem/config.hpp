#pragma once

// Line-oriented key=value run configuration.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gravem/design.hpp"
#include "gravem/error.hpp"
#include "gravem/hash.hpp"
#include "gravem/io.hpp"
#include "gravem/model.hpp"
#include "gravem/summaries.hpp"

namespace gravem {

enum class SusceptibleInit { fraction, balanced };

struct RunConfig {
  std::optional<std::uint64_t> seed;
  SummaryKind statistic = SummaryKind::zero_proportion;

  DataPaths data;
  std::string mask;
  double underreporting_rate = 1.0;

  bool normalize_by_population = true;
  SusceptibleInit susceptible_init = SusceptibleInit::fraction;
  double s0 = 0.05;
  std::size_t horizon = 0;  // 0: length of the case panel
  GravityParams truth;

  PriorBox prior;
  std::array<std::size_t, kGravityAxes> grid{20, 20, 20, 20};
  PinnedAxes pinned{};
  std::size_t replicates = 1;
  std::size_t workers = 0;  // 0: all hardware threads

  std::size_t fit_starts = 8;

  std::size_t chain_length = 20000;
  long long burn_in = -1;
  std::size_t thin = 1;
  bool discrepancy = true;
  double gamma = 0.95;
  std::array<std::size_t, 2> region{0, 3};

  std::string flux_label;
  bool flux_average = true;
  double flux_threshold = 0.0;
  std::size_t flux_bins = 20;
  bool flux_log = true;
  std::vector<std::string> flux_cities;

  std::uint64_t require_seed() const {
    if (!seed) throw UsageError("a seed is required (config key 'seed' or --seed)");
    return *seed;
  }

  /// Canonical key=value listing of every setting, defaults included.
  std::map<std::string, std::string> entries() const;
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("config key '" + key + "': expected a boolean, found '" + v + "'");
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  throw UsageError("config key '" + key + "': expected a number, found '" + v + "'");
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long n = std::stoull(v, &used);
    if (used == v.size() && v.find('-') == std::string::npos) return n;
  } catch (const std::exception&) {
  }
  throw UsageError("config key '" + key + "': expected a nonnegative integer, found '" + v + "'");
}

inline std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  for (auto& f : split(v, ',')) {
    f = trim(f);
    if (!f.empty()) out.push_back(f);
  }
  return out;
}

inline std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

}  // namespace detail

/// Applies one setting. Relative paths are resolved against `base_dir`.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  auto path = [&](const std::string& v) {
    if (v.empty()) return v;
    std::filesystem::path p(v);
    return (p.is_absolute() || base_dir.empty() ? p : base_dir / p).lexically_normal().string();
  };
  auto axis_key = [&](const std::string& prefix) -> std::optional<std::size_t> {
    if (key.rfind(prefix, 0) != 0) return std::nullopt;
    const std::string name = key.substr(prefix.size());
    for (std::size_t a = 0; a < kGravityAxes; ++a)
      if (name == kAxisNames[a]) return a;
    throw UsageError("unknown config key '" + key + "'");
  };

  if (key == "seed") c.seed = parse_count(key, value);
  else if (key == "statistic") {
    try {
      c.statistic = summary_kind_from_string(value);
    } catch (const DataError& e) {
      throw UsageError(e.what());
    }
  }
  else if (key == "cities") c.data.cities = path(value);
  else if (key == "cases") c.data.cases = path(value);
  else if (key == "vaccination") c.data.vaccination = path(value);
  else if (key == "distances") c.data.distances = path(value);
  else if (key == "mask") c.mask = path(value);
  else if (key == "coordinates") {
    if (value != "planar" && value != "latlon") throw UsageError("coordinates must be 'planar' or 'latlon'");
    c.data.latlon = value == "latlon";
  }
  else if (key == "weekly") c.data.weekly = parse_bool(key, value);
  else if (key == "underreporting_rate") {
    c.underreporting_rate = parse_real(key, value);
    if (!(c.underreporting_rate > 0.0 && c.underreporting_rate <= 1.0)) throw UsageError("underreporting_rate must lie in (0, 1]");
  }
  else if (key == "normalize_by_population") c.normalize_by_population = parse_bool(key, value);
  else if (key == "susceptible_init") {
    if (value != "fraction" && value != "balanced") throw UsageError("susceptible_init must be 'fraction' or 'balanced'");
    c.susceptible_init = value == "balanced" ? SusceptibleInit::balanced : SusceptibleInit::fraction;
  }
  else if (key == "s0") {
    c.s0 = parse_real(key, value);
    if (!(c.s0 > 0.0 && c.s0 <= 1.0)) throw UsageError("s0 must lie in (0, 1]");
  }
  else if (key == "horizon") c.horizon = parse_count(key, value);
  else if (auto a = axis_key("truth.")) c.truth[*a] = parse_real(key, value);
  else if (auto a2 = axis_key("prior.")) {
    const auto f = parse_list(value);
    if (f.size() != 2) throw UsageError("config key '" + key + "': expected 'lo,hi'");
    c.prior.lo[*a2] = parse_real(key, f[0]);
    c.prior.hi[*a2] = parse_real(key, f[1]);
    if (!(c.prior.lo[*a2] < c.prior.hi[*a2])) throw UsageError("config key '" + key + "': lo must be below hi");
  }
  else if (auto a3 = axis_key("grid.")) c.grid[*a3] = parse_count(key, value);
  else if (auto a4 = axis_key("pin.")) {
    if (value.empty() || value == "none") c.pinned[*a4].reset();
    else c.pinned[*a4] = parse_real(key, value);
  }
  else if (key == "replicates") c.replicates = parse_count(key, value);
  else if (key == "workers") c.workers = parse_count(key, value);
  else if (key == "fit.starts") c.fit_starts = parse_count(key, value);
  else if (key == "chain_length") c.chain_length = parse_count(key, value);
  else if (key == "burn_in") c.burn_in = value == "auto" ? -1 : static_cast<long long>(parse_count(key, value));
  else if (key == "thin") c.thin = parse_count(key, value);
  else if (key == "discrepancy") c.discrepancy = parse_bool(key, value);
  else if (key == "gamma") {
    c.gamma = parse_real(key, value);
    if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw UsageError("gamma must lie in (0, 1]");
  }
  else if (key == "region") {
    const auto f = parse_list(value);
    if (f.size() != 2) throw UsageError("region must name two coordinates");
    for (std::size_t i = 0; i < 2; ++i) {
      bool found = false;
      for (std::size_t a = 0; a < kGravityAxes + 1; ++a)
        if (f[i] == (a < kGravityAxes ? kAxisNames[a] : "delta")) {
          c.region[i] = a;
          found = true;
        }
      if (!found) throw UsageError("unknown region coordinate '" + f[i] + "'");
    }
  }
  else if (key == "flux.label") c.flux_label = value;
  else if (key == "flux.average") c.flux_average = parse_bool(key, value);
  else if (key == "flux.threshold") c.flux_threshold = parse_real(key, value);
  else if (key == "flux.bins") c.flux_bins = parse_count(key, value);
  else if (key == "flux.log") c.flux_log = parse_bool(key, value);
  else if (key == "flux.cities") c.flux_cities = parse_list(value);
  else throw UsageError("unknown config key '" + key + "'");
}

/// Parses "key = value" lines; '#' starts a comment.
inline RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}, const std::string& name = "config") {
  RunConfig c;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(name + " line " + std::to_string(n) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    try {
      apply_setting(c, key, value, base_dir);
    } catch (const UsageError& e) {
      throw UsageError(name + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  return parse_config(in, std::filesystem::absolute(path).parent_path(), path);
}

inline std::map<std::string, std::string> RunConfig::entries() const {
  std::map<std::string, std::string> e;
  if (seed) e["seed"] = std::to_string(*seed);
  e["statistic"] = to_string(statistic);
  e["cities"] = data.cities;
  e["cases"] = data.cases;
  e["vaccination"] = data.vaccination;
  e["distances"] = data.distances;
  e["mask"] = mask;
  e["coordinates"] = data.latlon ? "latlon" : "planar";
  e["weekly"] = data.weekly ? "true" : "false";
  e["underreporting_rate"] = format_double(underreporting_rate);
  e["normalize_by_population"] = normalize_by_population ? "true" : "false";
  e["susceptible_init"] = susceptible_init == SusceptibleInit::balanced ? "balanced" : "fraction";
  e["s0"] = format_double(s0);
  e["horizon"] = std::to_string(horizon);
  for (std::size_t a = 0; a < kGravityAxes; ++a) {
    const std::string n = kAxisNames[a];
    e["truth." + n] = format_double(truth[a]);
    e["prior." + n] = format_double(prior.lo[a]) + "," + format_double(prior.hi[a]);
    e["grid." + n] = std::to_string(grid[a]);
    e["pin." + n] = pinned[a] ? format_double(*pinned[a]) : "none";
  }
  e["replicates"] = std::to_string(replicates);
  e["workers"] = std::to_string(workers);
  e["fit.starts"] = std::to_string(fit_starts);
  e["chain_length"] = std::to_string(chain_length);
  e["burn_in"] = burn_in < 0 ? "auto" : std::to_string(burn_in);
  e["thin"] = std::to_string(thin);
  e["discrepancy"] = discrepancy ? "true" : "false";
  e["gamma"] = format_double(gamma);
  auto coord = [](std::size_t i) { return std::string(i < kGravityAxes ? kAxisNames[i] : "delta"); };
  e["region"] = coord(region[0]) + "," + coord(region[1]);
  e["flux.label"] = flux_label;
  e["flux.average"] = flux_average ? "true" : "false";
  e["flux.threshold"] = format_double(flux_threshold);
  e["flux.bins"] = std::to_string(flux_bins);
  e["flux.log"] = flux_log ? "true" : "false";
  e["flux.cities"] = detail::join(flux_cities);
  return e;
}

}  // namespace gravem
