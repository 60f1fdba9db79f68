#pragma once

// Design grids over gravity-parameter space and batch simulation of the
// emulator's training set.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gravem/error.hpp"
#include "gravem/hash.hpp"
#include "gravem/model.hpp"
#include "gravem/parallel.hpp"
#include "gravem/rng.hpp"
#include "gravem/summaries.hpp"

namespace gravem {

using PinnedAxes = std::array<std::optional<double>, kGravityAxes>;

/// Axis-aligned prior support for the gravity parameters.
struct PriorBox {
  std::array<double, kGravityAxes> lo{0.0, 0.0, 0.0, 0.0};
  std::array<double, kGravityAxes> hi{2.0, 2.0, 2.0, 2.0};

  double side(std::size_t a) const { return hi[a] - lo[a]; }
  bool contains(std::size_t a, double v) const { return v >= lo[a] && v <= hi[a]; }
  bool contains(const GravityParams& g) const {
    for (std::size_t a = 0; a < kGravityAxes; ++a)
      if (!contains(a, g[a])) return false;
    return true;
  }
  void validate() const {
    for (std::size_t a = 0; a < kGravityAxes; ++a)
      detail::require(std::isfinite(lo[a]) && std::isfinite(hi[a]) && lo[a] < hi[a],
                      std::string("prior bounds for ") + kAxisNames[a] + " must satisfy lo < hi");
  }
  friend bool operator==(const PriorBox&, const PriorBox&) = default;
};

struct DesignGrid {
  std::vector<GravityParams> points;
  PriorBox bounds;
  std::array<std::size_t, kGravityAxes> counts{};
  PinnedAxes pinned{};

  std::size_t size() const { return points.size(); }
  /// Spacing between neighbouring values on a free axis.
  double spacing(std::size_t axis) const { return bounds.side(axis) / static_cast<double>(counts[axis] - 1); }
};

/// Full factorial of endpoint-inclusive, equally spaced values on each free
/// axis; pinned axes hold their constant. theta' varies slowest.
inline DesignGrid make_grid(const PriorBox& bounds, const std::array<std::size_t, kGravityAxes>& counts,
                            const PinnedAxes& pinned = {}) {
  bounds.validate();
  DesignGrid g{{}, bounds, counts, pinned};
  std::array<std::vector<double>, kGravityAxes> values;
  std::size_t total = 1;
  for (std::size_t a = 0; a < kGravityAxes; ++a) {
    if (pinned[a]) {
      detail::require(std::isfinite(*pinned[a]), "pinned value must be finite");
      values[a] = {*pinned[a]};
      g.counts[a] = 1;
      continue;
    }
    detail::require(counts[a] >= 2, std::string("grid count for ") + kAxisNames[a] + " must be >= 2");
    values[a].resize(counts[a]);
    for (std::size_t i = 0; i < counts[a]; ++i) {
      // Endpoints exactly, interior by affine interpolation.
      const double f = static_cast<double>(i) / static_cast<double>(counts[a] - 1);
      values[a][i] = i + 1 == counts[a] ? bounds.hi[a] : bounds.lo[a] + f * bounds.side(a);
    }
    total *= counts[a];
  }
  g.points.reserve(total);
  for (double v0 : values[0])
    for (double v1 : values[1])
      for (double v2 : values[2])
        for (double v3 : values[3]) g.points.push_back({v0, v1, v2, v3});
  return g;
}

/// Everything a forward simulation needs apart from the gravity parameters
/// and the seed.
struct SimulationSetup {
  EpidemicState initial;
  LocalDynamics local;
  Demographics demographics;
  DistanceMatrix distances;
  std::size_t horizon = 1;
  bool normalize_by_population = true;
  std::vector<std::string> city_ids;

  EpidemicPanel run(const GravityParams& gp, std::uint64_t seed) const {
    SimulationOptions opt;
    opt.seed = seed;
    opt.normalize_by_population = normalize_by_population;
    return simulate(initial, gp, local, demographics, distances, horizon, opt, city_ids);
  }

  /// Hash of the configuration, so training sets record the simulator they came from.
  std::uint64_t content_hash() const {
    std::ostringstream s;
    s << "t0=" << initial.t << ";T=" << horizon << ";norm=" << normalize_by_population << ";alpha=" << format_double(local.alpha);
    for (double b : local.beta) s << ';' << format_double(b);
    const std::size_t K = initial.cities();
    for (std::size_t k = 0; k < K; ++k) {
      s << "|" << (k < city_ids.size() ? city_ids[k] : std::to_string(k + 1)) << ':' << format_double(initial.susceptibles[k])
        << ':' << initial.infected[k];
      for (std::size_t c = 0; c < demographics.population.columns(); ++c) s << ',' << format_double(demographics.population.cell(k, c));
      for (std::size_t c = 0; c < demographics.births.columns(); ++c) s << ',' << format_double(demographics.births.cell(k, c));
      for (std::size_t c = 0; c < demographics.vaccination.columns(); ++c) s << ',' << format_double(demographics.vaccination.cell(k, c));
      for (std::size_t j = 0; j < K; ++j) s << ',' << format_double(distances(k, j));
    }
    return fnv1a(s.str());
  }
};

/// Design points paired with their (replicate-averaged) summary distances.
struct TrainingSet {
  std::vector<GravityParams> points;
  std::vector<double> distances;
  SummaryKind kind = SummaryKind::zero_proportion;
  std::size_t replicates = 1;
  std::uint64_t root_seed = 0;
  std::string observed_hash;
  std::string simulator_hash;
  PriorBox bounds;
  PinnedAxes pinned{};

  std::size_t size() const { return points.size(); }

  std::size_t argmin() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < distances.size(); ++i)
      if (distances[i] < distances[best]) best = i;
    return best;
  }
};

using SimulatorFn = std::function<EpidemicPanel(const GravityParams&, std::uint64_t seed)>;

/// Seed for replicate r at design point i.
inline std::uint64_t replicate_seed(std::uint64_t root, std::size_t point, std::size_t replicate) {
  return derive_key(root, 0x64657369676eULL, point, replicate);
}

/// D_i = mean over replicates of the distance between Y(Theta_i) and the
/// observed summary. Any simulator failure aborts the whole build.
inline TrainingSet build_training_set(const DesignGrid& grid, const SummaryVector& observed, const SimulatorFn& simulator,
                                      std::size_t replicates, std::uint64_t root_seed, std::size_t workers = default_workers(),
                                      std::string simulator_hash = {}) {
  detail::require(replicates >= 1, "replicate count must be >= 1");
  detail::require(!grid.points.empty(), "design grid is empty");
  TrainingSet ts;
  ts.points = grid.points;
  ts.distances.assign(grid.size(), 0.0);
  ts.kind = observed.kind;
  ts.replicates = replicates;
  ts.root_seed = root_seed;
  ts.observed_hash = hex64(observed.content_hash());
  ts.simulator_hash = std::move(simulator_hash);
  ts.bounds = grid.bounds;
  ts.pinned = grid.pinned;

  const std::size_t jobs = grid.size() * replicates;
  std::vector<double> per_replicate(jobs, 0.0);
  parallel_for(jobs, workers, [&](std::size_t job) {
    const std::size_t i = job / replicates, r = job % replicates;
    const EpidemicPanel panel = simulator(grid.points[i], replicate_seed(root_seed, i, r));
    per_replicate[job] = summary_distance(summarize(panel, observed.kind), observed);
  });
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double sum = 0.0;
    for (std::size_t r = 0; r < replicates; ++r) sum += per_replicate[i * replicates + r];
    ts.distances[i] = sum / static_cast<double>(replicates);
  }
  return ts;
}

inline TrainingSet build_training_set(const DesignGrid& grid, const SummaryVector& observed, const SimulationSetup& setup,
                                      std::size_t replicates, std::uint64_t root_seed, std::size_t workers = default_workers()) {
  return build_training_set(
      grid, observed, [&setup](const GravityParams& gp, std::uint64_t seed) { return setup.run(gp, seed); }, replicates,
      root_seed, workers, hex64(setup.content_hash()));
}

// ---------------------------------------------------------------------------
// CSV persistence

namespace detail {

inline std::string pinned_to_string(const PinnedAxes& p) {
  std::string s;
  for (std::size_t a = 0; a < kGravityAxes; ++a) {
    if (!p[a]) continue;
    if (!s.empty()) s += ';';
    s += std::string(kAxisNames[a]) + ':' + format_double(*p[a]);
  }
  return s;
}

inline std::size_t axis_index(const std::string& name) {
  for (std::size_t a = 0; a < kGravityAxes; ++a)
    if (name == kAxisNames[a]) return a;
  throw DataError("unknown gravity axis '" + name + "'");
}

inline PinnedAxes pinned_from_string(const std::string& s) {
  PinnedAxes p{};
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (item.empty()) continue;
    auto colon = item.find(':');
    if (colon == std::string::npos) throw DataError("malformed pinned axis entry '" + item + "'");
    p[axis_index(item.substr(0, colon))] = std::stod(item.substr(colon + 1));
  }
  return p;
}

inline std::string box_to_string(const PriorBox& b) {
  std::string s;
  for (std::size_t a = 0; a < kGravityAxes; ++a) {
    if (a) s += ';';
    s += format_double(b.lo[a]) + ':' + format_double(b.hi[a]);
  }
  return s;
}

inline PriorBox box_from_string(const std::string& s) {
  PriorBox b;
  std::stringstream in(s);
  std::string item;
  for (std::size_t a = 0; a < kGravityAxes; ++a) {
    if (!std::getline(in, item, ';')) throw DataError("prior box needs four lo:hi entries");
    auto colon = item.find(':');
    if (colon == std::string::npos) throw DataError("malformed prior box entry '" + item + "'");
    b.lo[a] = std::stod(item.substr(0, colon));
    b.hi[a] = std::stod(item.substr(colon + 1));
  }
  return b;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline void write_training_csv(std::ostream& out, const TrainingSet& ts) {
  out << "# format=gravem-training-set/1\n";
  out << "# statistic=" << to_string(ts.kind) << "\n";
  out << "# replicates=" << ts.replicates << "\n";
  out << "# root_seed=" << ts.root_seed << "\n";
  out << "# observed_hash=" << ts.observed_hash << "\n";
  out << "# simulator_hash=" << ts.simulator_hash << "\n";
  out << "# prior_box=" << detail::box_to_string(ts.bounds) << "\n";
  out << "# pinned=" << detail::pinned_to_string(ts.pinned) << "\n";
  out << "theta_prime,tau1,tau2,rho,distance\n";
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto& p = ts.points[i];
    out << format_double(p.theta_prime) << ',' << format_double(p.tau1) << ',' << format_double(p.tau2) << ','
        << format_double(p.rho) << ',' << format_double(ts.distances[i]) << '\n';
  }
}

inline TrainingSet read_training_csv(std::istream& in) {
  TrainingSet ts;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2), value = line.substr(eq + 1);
      if (key == "statistic") ts.kind = summary_kind_from_string(value);
      else if (key == "replicates") ts.replicates = std::stoul(value);
      else if (key == "root_seed") ts.root_seed = std::stoull(value);
      else if (key == "observed_hash") ts.observed_hash = value;
      else if (key == "simulator_hash") ts.simulator_hash = value;
      else if (key == "prior_box") ts.bounds = detail::box_from_string(value);
      else if (key == "pinned") ts.pinned = detail::pinned_from_string(value);
      continue;
    }
    if (!header) {
      if (line != "theta_prime,tau1,tau2,rho,distance")
        throw DataError("training csv line " + std::to_string(lineno) + ": unexpected header");
      header = true;
      continue;
    }
    auto f = detail::split(line, ',');
    if (f.size() != 5) throw DataError("training csv line " + std::to_string(lineno) + ": expected 5 fields");
    try {
      ts.points.push_back({std::stod(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
      ts.distances.push_back(std::stod(f[4]));
    } catch (const std::exception&) {
      throw DataError("training csv line " + std::to_string(lineno) + ": bad number");
    }
    if (ts.distances.back() < 0.0) throw DataError("training csv line " + std::to_string(lineno) + ": negative distance");
  }
  if (!header) throw DataError("training csv has no header");
  return ts;
}

}  // namespace gravem
