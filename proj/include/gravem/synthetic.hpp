#pragma once

// Synthetic metapopulations for recovery experiments: a few large reservoir
// cities on the corners of a square, each surrounded by a cluster of small
// towns where the infection repeatedly fades out and is reintroduced.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "gravem/design.hpp"
#include "gravem/io.hpp"
#include "gravem/model.hpp"
#include "gravem/rng.hpp"

namespace gravem {

struct SyntheticWorldSpec {
  std::size_t cities = 40;
  std::size_t hubs = 4;  // at most 4
  double hub_population_lo = 3e5, hub_population_hi = 1e6;
  double town_population_lo = 1e3, town_population_hi = 3e4;
  double hub_separation_km = 2000.0;
  double town_radius_lo_km = 30.0, town_radius_hi_km = 400.0;
  double annual_birth_rate = 0.04;
};

struct SyntheticWorld {
  std::vector<CityRecord> cities;
  Demographics demographics;
  DistanceMatrix distances;
  EpidemicState initial;

  std::vector<std::string> city_ids() const {
    std::vector<std::string> ids;
    for (const auto& c : cities) ids.push_back(c.id);
    return ids;
  }

  SimulationSetup setup(std::size_t horizon, const LocalDynamics& local = {}) const {
    return {initial, local, demographics, distances, horizon, true, city_ids()};
  }
};

/// Draws a world. Hubs start with I = round(B) and every city starts at its
/// locally balanced susceptible level.
inline SyntheticWorld make_synthetic_world(const SyntheticWorldSpec& spec, std::uint64_t seed, const LocalDynamics& local = {}) {
  detail::require(spec.hubs >= 1 && spec.hubs <= 4 && spec.hubs < spec.cities, "synthetic world needs 1-4 hubs and some towns");
  Substream rng(derive_key(seed, 0x776f726c64ULL));
  auto log_uniform = [&](double lo, double hi) { return std::round(std::exp(std::log(lo) + rng.uniform() * (std::log(hi) - std::log(lo)))); };
  const double corners[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};

  SyntheticWorld w;
  std::vector<double> pop, births, x, y;
  for (std::size_t k = 0; k < spec.cities; ++k) {
    CityRecord c;
    c.id = std::to_string(k + 1);
    if (k < spec.hubs) {
      c.name = "hub" + c.id;
      c.population = log_uniform(spec.hub_population_lo, spec.hub_population_hi);
      c.x = corners[k][0] * spec.hub_separation_km;
      c.y = corners[k][1] * spec.hub_separation_km;
    } else {
      c.name = "town" + c.id;
      c.population = log_uniform(spec.town_population_lo, spec.town_population_hi);
      const auto home = static_cast<std::size_t>(rng.uniform() * static_cast<double>(spec.hubs));
      const double angle = 2.0 * std::numbers::pi * rng.uniform();
      const double r = spec.town_radius_lo_km + rng.uniform() * (spec.town_radius_hi_km - spec.town_radius_lo_km);
      c.x = corners[home][0] * spec.hub_separation_km + r * std::cos(angle);
      c.y = corners[home][1] * spec.hub_separation_km + r * std::sin(angle);
    }
    c.births = c.population * spec.annual_birth_rate / static_cast<double>(kBiweeksPerYear);
    pop.push_back(c.population);
    births.push_back(c.births);
    x.push_back(c.x);
    y.push_back(c.y);
    w.cities.push_back(c);
  }
  w.demographics = Demographics::constant(pop, births);
  w.distances = DistanceMatrix::planar(x, y);
  w.initial.t = 1;
  w.initial.infected.assign(spec.cities, 0);
  for (std::size_t k = 0; k < spec.hubs; ++k) w.initial.infected[k] = std::llround(births[k]);
  w.initial.susceptibles = balanced_susceptibles(w.demographics, w.initial.infected, local);
  return w;
}

/// Scenario used for recovery at tau1 = tau2 = 1: larger hub/town contrast
/// and wider spacing so the zero-proportion statistic stays informative.
inline SyntheticWorldSpec recovery_world_spec() {
  SyntheticWorldSpec s;
  s.hub_population_lo = 6e4;
  s.hub_population_hi = 2e5;
  s.town_population_lo = 2e2;
  s.town_population_hi = 6e3;
  s.hub_separation_km = 3000.0;
  s.town_radius_lo_km = 50.0;
  s.town_radius_hi_km = 600.0;
  return s;
}

}  // namespace gravem
