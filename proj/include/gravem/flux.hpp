#pragma once

// Infection movement between cities implied by fitted gravity parameters:
//   m_kj = theta * sum_t N_kt^tau1 * I_jt^tau2 / d_kj^rho   (/ T when averaged)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "gravem/calibrate.hpp"
#include "gravem/density.hpp"
#include "gravem/error.hpp"
#include "gravem/hash.hpp"
#include "gravem/model.hpp"
#include "gravem/parallel.hpp"

namespace gravem {

/// Correctly rounded sum (Shewchuk's algorithm, as in Python's math.fsum).
inline double exact_sum(const std::vector<double>& values) {
  std::vector<double> partials;
  for (double x : values) {
    std::size_t i = 0;
    for (double y : partials) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  if (partials.empty()) return 0.0;
  std::size_t n = partials.size();
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi, y = partials[--n];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  // Half-way case: nudge towards the remaining partials.
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0, x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

/// K x K movement of infection; row sums leave a city, column sums arrive.
class FluxMatrix {
public:
  FluxMatrix() = default;
  explicit FluxMatrix(std::size_t k) : k_(k), m_(k * k, 0.0) {}

  std::size_t cities() const { return k_; }
  double operator()(std::size_t k, std::size_t j) const { return m_[k * k_ + j]; }
  double& operator()(std::size_t k, std::size_t j) { return m_[k * k_ + j]; }
  const std::vector<double>& data() const { return m_; }
  double total() const { return exact_sum(m_); }
  double max() const { return m_.empty() ? 0.0 : *std::max_element(m_.begin(), m_.end()); }

private:
  std::size_t k_ = 0;
  std::vector<double> m_;
};

struct FluxOptions {
  bool average = true;
  /// Biweek columns to include; empty means all.
  std::vector<bool> mask;
};

inline FluxMatrix movement_matrix(const CouplingParams& c, const Demographics& demo, const DistanceMatrix& dist,
                                  const EpidemicPanel& panel, const FluxOptions& opt = {}) {
  const std::size_t K = panel.cities(), T = panel.biweeks();
  detail::require(demo.cities() == K && dist.cities() == K, "flux inputs disagree on city count");
  detail::require(opt.mask.empty() || opt.mask.size() == T, "biweek mask length must match the panel");
  std::vector<double> weight(K * K, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < K; ++j) {
      if (k == j) continue;
      const double d = dist(k, j);
      if (!(d > 0.0)) throw DataError("distances between distinct cities must be positive");
      weight[k * K + j] = std::pow(d, -c.rho);
    }
  FluxMatrix m(K);
  std::size_t used = 0;
  std::vector<double> source(K);
  for (std::size_t t = 0; t < T; ++t) {
    if (!opt.mask.empty() && !opt.mask[t]) continue;
    ++used;
    const long long label = panel.biweek_label(t);
    for (std::size_t j = 0; j < K; ++j)
      source[j] = panel(j, t) > 0 ? std::pow(static_cast<double>(panel(j, t)), c.tau2) : 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double pull = std::pow(demo.population.at(k, label), c.tau1);
      for (std::size_t j = 0; j < K; ++j)
        if (j != k && source[j] != 0.0) m(k, j) += pull * source[j] * weight[k * K + j];
    }
  }
  const double scale = opt.average && used > 0 ? c.theta / static_cast<double>(used) : c.theta;
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < K; ++j) m(k, j) *= scale;
  return m;
}

inline FluxMatrix movement_matrix(const GravityParams& gp, const Demographics& demo, const DistanceMatrix& dist,
                                  const EpidemicPanel& panel, const FluxOptions& opt = {}) {
  return movement_matrix(CouplingParams::from(gp), demo, dist, panel, opt);
}

enum class FluxDirection { out, in };

struct CityFlux {
  double outgoing = 0.0;  // row sum
  double incoming = 0.0;  // column sum
};

inline CityFlux city_flux(const FluxMatrix& m, std::size_t k) {
  if (k >= m.cities()) throw DataError("city index " + std::to_string(k) + " out of range");
  std::vector<double> row(m.cities()), col(m.cities());
  for (std::size_t j = 0; j < m.cities(); ++j) {
    row[j] = m(k, j);
    col[j] = m(j, k);
  }
  return {exact_sum(row), exact_sum(col)};
}

/// Sum of all cities' outgoing (or incoming) flux. Both are correctly rounded
/// sums of the same entries, so they agree exactly with each other and with total().
inline double total_flux(const FluxMatrix& m, FluxDirection dir) {
  const std::size_t K = m.cities();
  std::vector<double> all;
  all.reserve(K * K);
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = 0; b < K; ++b) all.push_back(dir == FluxDirection::out ? m(a, b) : m(b, a));
  return exact_sum(all);
}

struct FluxInterval {
  double median = 0.0, lo = 0.0, hi = 0.0;
};

struct CityFluxSummary {
  std::size_t city = 0;
  FluxInterval outgoing, incoming;
};

struct FluxSummary {
  double gamma = 0.95;
  std::vector<CityFluxSummary> cities;
};

/// Posterior median and equal-tailed interval of each city's flux over the
/// chain's samples.
inline FluxSummary flux_posterior_summary(const PosteriorChain& chain, const Demographics& demo, const DistanceMatrix& dist,
                                          const EpidemicPanel& panel, const std::vector<std::size_t>& cities, double gamma,
                                          const FluxOptions& opt = {}, std::size_t workers = 1) {
  detail::require(!chain.samples.empty(), "flux summary needs a nonempty chain");
  for (std::size_t k : cities) detail::require(k < panel.cities(), "city index out of range");
  const std::size_t n = chain.size(), C = cities.size();
  std::vector<double> out(n * C), in(n * C);
  parallel_for(n, workers, [&](std::size_t s) {
    const FluxMatrix m = movement_matrix(chain.samples[s].theta, demo, dist, panel, opt);
    for (std::size_t c = 0; c < C; ++c) {
      const CityFlux f = city_flux(m, cities[c]);
      out[c * n + s] = f.outgoing;
      in[c * n + s] = f.incoming;
    }
  });
  FluxSummary summary{gamma, {}};
  auto interval = [&](const std::vector<double>& all, std::size_t c) {
    std::vector<double> v(all.begin() + static_cast<std::ptrdiff_t>(c * n), all.begin() + static_cast<std::ptrdiff_t>((c + 1) * n));
    const auto [lo, hi] = credible_interval(v, gamma);
    return FluxInterval{median(std::move(v)), lo, hi};
  };
  for (std::size_t c = 0; c < C; ++c) summary.cities.push_back({cities[c], interval(out, c), interval(in, c)});
  return summary;
}

inline void write_flux_summary_csv(std::ostream& out, const FluxSummary& s, const std::vector<std::string>& city_ids) {
  out << "city,from_median,from_lo,from_hi,to_median,to_lo,to_hi\n";
  for (const auto& c : s.cities) {
    out << city_ids.at(c.city) << ',' << format_double(c.outgoing.median) << ',' << format_double(c.outgoing.lo) << ','
        << format_double(c.outgoing.hi) << ',' << format_double(c.incoming.median) << ',' << format_double(c.incoming.lo) << ','
        << format_double(c.incoming.hi) << '\n';
  }
}

struct Edge {
  std::size_t source = 0, target = 0;
  double weight = 0.0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Edges whose weight is at least `threshold`, ordered by (source, target).
/// `out` lists (k, j, m_kj); `in` lists (k, j, m_jk), the flow arriving at k from j.
inline std::vector<Edge> export_network(const FluxMatrix& m, double threshold, FluxDirection dir) {
  detail::require(threshold >= 0.0, "edge threshold must be nonnegative");
  std::vector<Edge> edges;
  const std::size_t K = m.cities();
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < K; ++j) {
      if (k == j) continue;
      const double w = dir == FluxDirection::out ? m(k, j) : m(j, k);
      if (w >= threshold) edges.push_back({k, j, w});
    }
  return edges;
}

inline void write_edges_csv(std::ostream& out, const std::vector<Edge>& edges, const std::vector<std::string>& city_ids) {
  out << "source_id,target_id,weight\n";
  for (const auto& e : edges) out << city_ids.at(e.source) << ',' << city_ids.at(e.target) << ',' << format_double(e.weight) << '\n';
}

struct Histogram {
  std::vector<double> edges;  // bins + 1 boundaries
  std::vector<std::size_t> counts;
  bool log_transformed = false;
};

/// Histogram over cities of total outgoing or incoming flux, optionally of
/// log(flux + eps). Equal-width bins span the observed range.
inline Histogram degree_histogram(const FluxMatrix& m, FluxDirection dir, std::size_t bins, bool log_transform,
                                  double eps = 1e-9) {
  detail::require(bins >= 1, "histogram needs at least one bin");
  const std::size_t K = m.cities();
  std::vector<double> v(K);
  for (std::size_t k = 0; k < K; ++k) {
    const CityFlux f = city_flux(m, k);
    v[k] = dir == FluxDirection::out ? f.outgoing : f.incoming;
    if (log_transform) v[k] = std::log(v[k] + eps);
  }
  Histogram h;
  h.log_transformed = log_transform;
  h.counts.assign(bins, 0);
  if (K == 0) return h;
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const double lo = *mn, hi = *mx, width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(b == bins ? hi : lo + width * static_cast<double>(b));
  for (double x : v) {
    std::size_t b = 0;
    if (width > 0.0) b = std::min(bins - 1, static_cast<std::size_t>((x - lo) / width));
    ++h.counts[b];
  }
  return h;
}

inline void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "bin,lower,upper,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b)
    out << b << ',' << format_double(h.edges.empty() ? 0.0 : h.edges[b]) << ','
        << format_double(h.edges.empty() ? 0.0 : h.edges[b + 1]) << ',' << h.counts[b] << '\n';
}

}  // namespace gravem
