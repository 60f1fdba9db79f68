#pragma once

// Stochastic gravity TSIR metapopulation model.
//
// Each biweek t, city k receives transient infecteds
//   L_kt ~ Gamma(m_kt, 1),  m_kt = theta * N_kt^tau1 * sum_{j != k} I_jt^tau2 / d_kj^rho
// and incidence follows
//   I_k,t+1 ~ Poisson(beta_t * S_kt * (I_kt + L_kt)^alpha [/ N_kt])
//   S_k,t+1 = S_kt + B_kt * (1 - V_kt) - I_k,t+1.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gravem/error.hpp"
#include "gravem/rng.hpp"

namespace gravem {

inline constexpr std::size_t kBiweeksPerYear = 26;

/// Seasonal transmission rates for biweeks 1..26 (measles, England and Wales).
inline constexpr std::array<double, kBiweeksPerYear> kMeaslesBeta = {
    1.24, 1.14, 1.16, 1.31, 1.24, 1.12, 1.06, 1.02, 0.94, 0.98, 1.06, 1.08, 0.96,
    0.92, 0.92, 0.86, 0.76, 0.63, 0.62, 0.83, 1.13, 1.20, 1.11, 1.02, 1.04, 1.08};

/// Mixing exponent applied to (I + L).
inline constexpr double kMeaslesAlpha = 0.97;

struct LocalDynamics {
  std::array<double, kBiweeksPerYear> beta = kMeaslesBeta;
  double alpha = kMeaslesAlpha;

  void validate() const {
    for (double b : beta) detail::require(std::isfinite(b) && b > 0.0, "beta values must be finite and positive");
    detail::require(std::isfinite(alpha) && alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1]");
  }
};

/// beta_t with annual period; t is the 1-based biweek index.
inline double seasonal_beta(const LocalDynamics& local, long long t) {
  detail::require(t >= 1, "biweek index must be >= 1");
  return local.beta[static_cast<std::size_t>((t - 1) % static_cast<long long>(kBiweeksPerYear))];
}

/// theta = 10^(-5 theta').
inline double theta_from_reparam(double theta_prime) { return std::pow(10.0, -5.0 * theta_prime); }

/// theta' = -log10(theta) / 5.
inline double reparam_from_theta(double theta) { return -std::log10(theta) / 5.0; }

enum class Axis : std::size_t { theta_prime = 0, tau1 = 1, tau2 = 2, rho = 3 };
inline constexpr std::size_t kGravityAxes = 4;
inline constexpr std::array<const char*, kGravityAxes> kAxisNames = {"theta_prime", "tau1", "tau2", "rho"};

/// The four calibrated spatial-coupling parameters.
struct GravityParams {
  double theta_prime = 0.0;
  double tau1 = 1.0;
  double tau2 = 1.0;
  double rho = 1.0;

  double theta() const { return theta_from_reparam(theta_prime); }

  double operator[](std::size_t axis) const {
    switch (axis) {
      case 0: return theta_prime;
      case 1: return tau1;
      case 2: return tau2;
      default: return rho;
    }
  }
  double& operator[](std::size_t axis) {
    switch (axis) {
      case 0: return theta_prime;
      case 1: return tau1;
      case 2: return tau2;
      default: return rho;
    }
  }
  double operator[](Axis a) const { return (*this)[static_cast<std::size_t>(a)]; }
  double& operator[](Axis a) { return (*this)[static_cast<std::size_t>(a)]; }

  std::array<double, kGravityAxes> as_array() const { return {theta_prime, tau1, tau2, rho}; }
  static GravityParams from_array(const std::array<double, kGravityAxes>& a) { return {a[0], a[1], a[2], a[3]}; }

  friend bool operator==(const GravityParams&, const GravityParams&) = default;
};

/// Model-space coupling with theta on its natural scale. theta = 0 disconnects
/// the cities, which the reparametrized form can only approach.
struct CouplingParams {
  double theta = 1.0;
  double tau1 = 1.0;
  double tau2 = 1.0;
  double rho = 1.0;

  static CouplingParams from(const GravityParams& g) { return {g.theta(), g.tau1, g.tau2, g.rho}; }
};

/// K rows of per-city values; one column means constant over time, otherwise
/// column t-1 holds biweek t.
class CityTable {
public:
  CityTable() = default;
  CityTable(std::size_t cities, std::size_t columns, double fill = 0.0)
      : rows_(cities), cols_(columns), data_(cities * columns, fill) {}

  static CityTable constant(const std::vector<double>& per_city) {
    CityTable t(per_city.size(), 1);
    t.data_ = per_city;
    return t;
  }

  std::size_t cities() const { return rows_; }
  std::size_t columns() const { return cols_; }
  bool is_constant() const { return cols_ == 1; }

  /// Value for city k at 1-based biweek t.
  double at(std::size_t k, long long t) const {
    if (cols_ == 1) return data_[k];
    auto c = static_cast<std::size_t>(t - 1);
    if (t < 1 || c >= cols_) throw DataError("demographic series does not cover biweek " + std::to_string(t));
    return data_[k * cols_ + c];
  }
  double& cell(std::size_t k, std::size_t column) { return data_[k * cols_ + column]; }
  double cell(std::size_t k, std::size_t column) const { return data_[k * cols_ + column]; }

  bool covers(long long last_biweek) const { return cols_ == 1 || static_cast<long long>(cols_) >= last_biweek; }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Population N_kt, births B_kt per biweek and vaccination coverage V_kt.
struct Demographics {
  CityTable population;
  CityTable births;
  CityTable vaccination;

  static Demographics constant(const std::vector<double>& population, const std::vector<double>& births) {
    Demographics d;
    d.population = CityTable::constant(population);
    d.births = CityTable::constant(births);
    d.vaccination = CityTable::constant(std::vector<double>(population.size(), 0.0));
    return d;
  }

  std::size_t cities() const { return population.cities(); }

  /// Births that actually join the susceptible pool.
  double effective_births(std::size_t k, long long t) const { return births.at(k, t) * (1.0 - vaccination.at(k, t)); }

  void validate() const {
    const std::size_t k = population.cities();
    detail::require(births.cities() == k && vaccination.cities() == k, "demographic tables disagree on city count");
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t c = 0; c < population.columns(); ++c)
        detail::require(population.cell(i, c) > 0.0 && std::isfinite(population.cell(i, c)), "population must be positive");
      for (std::size_t c = 0; c < births.columns(); ++c)
        detail::require(births.cell(i, c) >= 0.0 && std::isfinite(births.cell(i, c)), "births must be nonnegative");
      for (std::size_t c = 0; c < vaccination.columns(); ++c)
        detail::require(vaccination.cell(i, c) >= 0.0 && vaccination.cell(i, c) <= 1.0, "vaccination coverage must lie in [0,1]");
    }
  }
};

/// Symmetric city-to-city distances in kilometres.
class DistanceMatrix {
public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t k) : k_(k), d_(k * k, 0.0) {}

  static DistanceMatrix planar(const std::vector<double>& x_km, const std::vector<double>& y_km) {
    detail::require(x_km.size() == y_km.size(), "coordinate vectors differ in length");
    DistanceMatrix m(x_km.size());
    for (std::size_t i = 0; i < m.k_; ++i)
      for (std::size_t j = 0; j < m.k_; ++j) m.d_[i * m.k_ + j] = std::hypot(x_km[i] - x_km[j], y_km[i] - y_km[j]);
    return m;
  }

  /// Great-circle distances; lon/lat in degrees, Earth radius 6371 km.
  static DistanceMatrix great_circle(const std::vector<double>& lon_deg, const std::vector<double>& lat_deg) {
    detail::require(lon_deg.size() == lat_deg.size(), "coordinate vectors differ in length");
    constexpr double kRadiusKm = 6371.0;
    constexpr double kDeg = 3.14159265358979323846 / 180.0;
    DistanceMatrix m(lon_deg.size());
    for (std::size_t i = 0; i < m.k_; ++i)
      for (std::size_t j = 0; j < m.k_; ++j) {
        if (i == j) continue;
        const double p1 = lat_deg[i] * kDeg, p2 = lat_deg[j] * kDeg;
        const double dp = p2 - p1, dl = (lon_deg[j] - lon_deg[i]) * kDeg;
        const double h = std::sin(dp / 2) * std::sin(dp / 2) + std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
        m.d_[i * m.k_ + j] = 2.0 * kRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
      }
    return m;
  }

  std::size_t cities() const { return k_; }
  double operator()(std::size_t i, std::size_t j) const { return d_[i * k_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return d_[i * k_ + j]; }

  void validate() const {
    for (std::size_t i = 0; i < k_; ++i) {
      detail::require((*this)(i, i) == 0.0, "distance matrix diagonal must be zero");
      for (std::size_t j = 0; j < k_; ++j) {
        if (i == j) continue;
        detail::require(std::isfinite((*this)(i, j)) && (*this)(i, j) > 0.0, "distances between distinct cities must be positive");
        detail::require((*this)(i, j) == (*this)(j, i), "distance matrix must be symmetric");
      }
    }
  }

private:
  std::size_t k_ = 0;
  std::vector<double> d_;
};

/// S_kt and I_kt at biweek t. Susceptibles stay real-valued so fractional
/// births accumulate without rounding bias.
struct EpidemicState {
  long long t = 1;
  std::vector<double> susceptibles;
  std::vector<std::int64_t> infected;

  std::size_t cities() const { return infected.size(); }
};

/// K x T matrix of nonnegative case counts.
class EpidemicPanel {
public:
  EpidemicPanel() = default;
  EpidemicPanel(std::vector<std::string> city_ids, std::size_t biweeks, long long first_biweek = 1)
      : ids_(std::move(city_ids)), t_(biweeks), first_(first_biweek), counts_(ids_.size() * biweeks, 0) {}

  static EpidemicPanel with_default_ids(std::size_t cities, std::size_t biweeks) {
    std::vector<std::string> ids;
    ids.reserve(cities);
    for (std::size_t k = 0; k < cities; ++k) ids.push_back(std::to_string(k + 1));
    return EpidemicPanel(std::move(ids), biweeks);
  }

  std::size_t cities() const { return ids_.size(); }
  std::size_t biweeks() const { return t_; }
  bool empty() const { return ids_.empty() || t_ == 0; }
  long long first_biweek() const { return first_; }
  long long biweek_label(std::size_t column) const { return first_ + static_cast<long long>(column); }
  const std::vector<std::string>& city_ids() const { return ids_; }

  /// Count for city k in column j (0-based).
  std::int64_t operator()(std::size_t k, std::size_t j) const { return counts_[k * t_ + j]; }
  std::int64_t& operator()(std::size_t k, std::size_t j) { return counts_[k * t_ + j]; }

  const std::vector<std::int64_t>& data() const { return counts_; }

  friend bool operator==(const EpidemicPanel&, const EpidemicPanel&) = default;

private:
  std::vector<std::string> ids_;
  std::size_t t_ = 0;
  long long first_ = 1;
  std::vector<std::int64_t> counts_;
};

// ---------------------------------------------------------------------------
// Elementary model terms

/// Expected transient influx m_kt into city k given the current infecteds.
/// A source city with no infecteds contributes nothing, whatever tau2 is.
inline double gravity_mean(std::size_t k, const std::vector<std::int64_t>& infected, const CouplingParams& c,
                           double population_k, const DistanceMatrix& dist) {
  double sum = 0.0;
  for (std::size_t j = 0; j < infected.size(); ++j) {
    if (j == k || infected[j] == 0) continue;
    const double d = dist(k, j);
    if (!(d > 0.0)) throw DataError("distance between cities " + std::to_string(k) + " and " + std::to_string(j) + " must be positive");
    sum += std::pow(static_cast<double>(infected[j]), c.tau2) * std::pow(d, -c.rho);
  }
  if (sum == 0.0 || c.theta == 0.0) return 0.0;
  return c.theta * std::pow(population_k, c.tau1) * sum;
}

inline double gravity_mean(std::size_t k, const EpidemicState& state, const GravityParams& gp, const Demographics& demo,
                           const DistanceMatrix& dist) {
  return gravity_mean(k, state.infected, CouplingParams::from(gp), demo.population.at(k, state.t), dist);
}

/// L ~ Gamma(shape m, scale 1); m = 0 returns exactly 0 without drawing.
template <class Rng>
double sample_influx(double m, Rng& rng) {
  if (!(m >= 0.0) || !std::isfinite(m)) throw NumericError("gamma shape must be finite and nonnegative");
  if (m == 0.0) return 0.0;
  return std::gamma_distribution<double>(m, 1.0)(rng);
}

/// Poisson draw; lambda = 0 returns exactly 0 without drawing.
template <class Rng>
std::int64_t sample_poisson(double lambda, Rng& rng) {
  if (!std::isfinite(lambda) || lambda < 0.0) throw NumericError("poisson rate must be finite and nonnegative");
  if (lambda == 0.0) return 0;
  return std::poisson_distribution<std::int64_t>(lambda)(rng);
}

/// lambda = beta_t * S * (I + L)^alpha, divided by N when normalizing.
inline double infection_intensity(double susceptibles, double infected, double influx, double beta_t, double alpha,
                                  double population, bool normalize_by_population) {
  const double pressure = infected + influx;
  if (susceptibles <= 0.0 || pressure <= 0.0) return 0.0;
  double lambda = beta_t * susceptibles * std::pow(pressure, alpha);
  if (normalize_by_population) lambda /= population;
  return lambda;
}

inline double infection_intensity(std::size_t k, const EpidemicState& state, double influx, const LocalDynamics& local,
                                  const Demographics& demo, bool normalize_by_population) {
  return infection_intensity(state.susceptibles[k], static_cast<double>(state.infected[k]), influx, seasonal_beta(local, state.t),
                             local.alpha, demo.population.at(k, state.t), normalize_by_population);
}

// ---------------------------------------------------------------------------
// Stepping and simulation

struct SimulationOptions {
  std::uint64_t seed = 0;
  bool normalize_by_population = true;
  /// Per-city substream keys; empty means 0..K-1. Two runs that give a city
  /// the same key draw the same randomness for it.
  std::vector<std::uint64_t> stream_keys;
};

/// Substream for one city at one biweek.
inline Substream city_stream(std::uint64_t seed, std::uint64_t city_key, long long t) {
  return Substream(derive_key(seed, city_key, static_cast<std::uint64_t>(t)));
}

namespace detail {

/// d_kj^-rho with a zero diagonal, computed once per simulation.
class GravityKernel {
public:
  GravityKernel(const DistanceMatrix& dist, double rho) : k_(dist.cities()), w_(k_ * k_, 0.0) {
    for (std::size_t i = 0; i < k_; ++i)
      for (std::size_t j = 0; j < k_; ++j) {
        if (i == j) continue;
        const double d = dist(i, j);
        if (!(d > 0.0)) throw DataError("distances between distinct cities must be positive");
        w_[i * k_ + j] = std::pow(d, -rho);
      }
  }
  double operator()(std::size_t i, std::size_t j) const { return w_[i * k_ + j]; }

private:
  std::size_t k_;
  std::vector<double> w_;
};

struct StepWork {
  std::vector<double> source;  // I_j^tau2, zero where I_j = 0
};

inline void check_consistent(const EpidemicState& s, const Demographics& demo, const DistanceMatrix& dist) {
  const std::size_t k = s.cities();
  require(s.susceptibles.size() == k, "state susceptible and infected vectors differ in length");
  require(demo.cities() == k, "demographics city count does not match state");
  require(dist.cities() == k, "distance matrix city count does not match state");
  require(s.t >= 1, "state biweek index must be >= 1");
  for (std::size_t i = 0; i < k; ++i) {
    require(s.susceptibles[i] >= 0.0 && std::isfinite(s.susceptibles[i]), "susceptibles must be finite and nonnegative");
    require(s.infected[i] >= 0, "infected counts must be nonnegative");
  }
}

inline std::uint64_t stream_key_for(const SimulationOptions& opt, std::size_t k) {
  return opt.stream_keys.empty() ? static_cast<std::uint64_t>(k) : opt.stream_keys[k];
}

inline std::size_t advance(EpidemicState& s, const CouplingParams& c, const LocalDynamics& local, const Demographics& demo,
                           const GravityKernel& kernel, const SimulationOptions& opt, StepWork& work) {
  const std::size_t K = s.cities();
  const long long t = s.t;
  work.source.assign(K, 0.0);
  for (std::size_t j = 0; j < K; ++j)
    if (s.infected[j] > 0) work.source[j] = std::pow(static_cast<double>(s.infected[j]), c.tau2);

  const double beta_t = seasonal_beta(local, t);
  std::vector<std::int64_t> next(K, 0);
  std::size_t truncations = 0;
  for (std::size_t k = 0; k < K; ++k) {
    Substream rng = city_stream(opt.seed, stream_key_for(opt, k), t);
    const double n_kt = demo.population.at(k, t);
    double m = 0.0;
    if (c.theta != 0.0) {
      double sum = 0.0;
      for (std::size_t j = 0; j < K; ++j)
        if (j != k && work.source[j] != 0.0) sum += work.source[j] * kernel(k, j);
      if (sum != 0.0) m = c.theta * std::pow(n_kt, c.tau1) * sum;
    }
    const double influx = sample_influx(m, rng);
    const double lambda = infection_intensity(s.susceptibles[k], static_cast<double>(s.infected[k]), influx, beta_t,
                                              local.alpha, n_kt, opt.normalize_by_population);
    const double available = s.susceptibles[k] + demo.effective_births(k, t);
    const auto bound = static_cast<std::int64_t>(std::floor(available));
    std::int64_t draw;
    if (lambda > 1e15) {
      draw = bound + 1;  // any realistic bound is exceeded; skip the draw
    } else {
      draw = sample_poisson(lambda, rng);
    }
    if (draw > bound) {
      draw = bound;
      ++truncations;
    }
    next[k] = draw;
    s.susceptibles[k] = available - static_cast<double>(draw);
  }
  s.infected = std::move(next);
  s.t = t + 1;
  return truncations;
}

}  // namespace detail

struct StepResult {
  EpidemicState state;
  std::size_t truncations = 0;
};

/// One biweek of the stochastic model. Draws are capped at the available
/// susceptibles S + B(1-V); each cap that fires is counted.
inline StepResult step(const EpidemicState& state, const CouplingParams& coupling, const LocalDynamics& local,
                       const Demographics& demo, const DistanceMatrix& dist, const SimulationOptions& options) {
  detail::check_consistent(state, demo, dist);
  detail::GravityKernel kernel(dist, coupling.rho);
  detail::StepWork work;
  StepResult r{state, 0};
  r.truncations = detail::advance(r.state, coupling, local, demo, kernel, options, work);
  return r;
}

inline StepResult step(const EpidemicState& state, const GravityParams& gp, const LocalDynamics& local,
                       const Demographics& demo, const DistanceMatrix& dist, const SimulationOptions& options) {
  return step(state, CouplingParams::from(gp), local, demo, dist, options);
}

struct Trajectory {
  EpidemicPanel panel;
  std::vector<double> susceptibles;  // K x T, row-major, same layout as the panel
  std::size_t truncations = 0;
};

/// Iterates the model for `horizon` biweeks from the supplied state; column 0
/// of the panel is the initial infecteds.
inline Trajectory simulate_trajectory(const EpidemicState& initial, const CouplingParams& coupling,
                                      const LocalDynamics& local, const Demographics& demo, const DistanceMatrix& dist,
                                      std::size_t horizon, const SimulationOptions& options,
                                      std::vector<std::string> city_ids = {}) {
  detail::require(horizon >= 1, "simulation horizon must be >= 1");
  detail::check_consistent(initial, demo, dist);
  const std::size_t K = initial.cities();
  detail::require(options.stream_keys.empty() || options.stream_keys.size() == K, "stream key count must match city count");
  const long long last = initial.t + static_cast<long long>(horizon) - 1;
  detail::require(demo.population.covers(last) && demo.births.covers(last) && demo.vaccination.covers(last),
                  "demographic series do not cover the simulation horizon");
  if (city_ids.empty()) {
    for (std::size_t k = 0; k < K; ++k) city_ids.push_back(std::to_string(k + 1));
  }
  detail::require(city_ids.size() == K, "city id count must match city count");

  Trajectory out{EpidemicPanel(std::move(city_ids), horizon, initial.t), std::vector<double>(K * horizon, 0.0), 0};
  EpidemicState s = initial;
  detail::GravityKernel kernel(dist, coupling.rho);
  detail::StepWork work;
  for (std::size_t j = 0; j < horizon; ++j) {
    if (j > 0) out.truncations += detail::advance(s, coupling, local, demo, kernel, options, work);
    for (std::size_t k = 0; k < K; ++k) {
      out.panel(k, j) = s.infected[k];
      out.susceptibles[k * horizon + j] = s.susceptibles[k];
    }
  }
  return out;
}

inline EpidemicPanel simulate(const EpidemicState& initial, const CouplingParams& coupling, const LocalDynamics& local,
                              const Demographics& demo, const DistanceMatrix& dist, std::size_t horizon,
                              const SimulationOptions& options, std::vector<std::string> city_ids = {}) {
  return simulate_trajectory(initial, coupling, local, demo, dist, horizon, options, std::move(city_ids)).panel;
}

inline EpidemicPanel simulate(const EpidemicState& initial, const GravityParams& gp, const LocalDynamics& local,
                              const Demographics& demo, const DistanceMatrix& dist, std::size_t horizon,
                              const SimulationOptions& options, std::vector<std::string> city_ids = {}) {
  return simulate(initial, CouplingParams::from(gp), local, demo, dist, horizon, options, std::move(city_ids));
}

/// S_k1 = round(s0 * N_k1).
inline std::vector<double> initial_susceptibles(const Demographics& demo, double fraction, long long t = 1) {
  detail::require(fraction > 0.0 && std::isfinite(fraction), "initial susceptible fraction must be positive");
  std::vector<double> s(demo.cities());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = std::round(fraction * demo.population.at(k, t));
  return s;
}

/// Susceptibles at which a city carrying I infecteds is locally balanced over
/// a year: S/N = (I + 1)^(1 - alpha) / geometric-mean(beta). Used to start
/// synthetic scenarios near their endemic regime.
inline std::vector<double> balanced_susceptibles(const Demographics& demo, const std::vector<std::int64_t>& infected,
                                                 const LocalDynamics& local, long long t = 1) {
  double log_sum = 0.0;
  for (double b : local.beta) log_sum += std::log(b);
  const double geo = std::exp(log_sum / static_cast<double>(kBiweeksPerYear));
  std::vector<double> s(demo.cities());
  for (std::size_t k = 0; k < s.size(); ++k)
    s[k] = std::round(demo.population.at(k, t) * std::pow(static_cast<double>(infected[k]) + 1.0, 1.0 - local.alpha) / geo);
  return s;
}

}  // namespace gravem
