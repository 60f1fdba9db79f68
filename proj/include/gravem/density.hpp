#pragma once

// Sample quantiles, kernel density estimates and highest-density regions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <numbers>
#include <ostream>
#include <utility>
#include <vector>

#include "gravem/error.hpp"

namespace gravem {

/// Hazen (type 5) quantile of an ascending sample: position n*p + 1/2,
/// linearly interpolated and clamped to the sample range.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  detail::require(!sorted.empty(), "quantile of an empty sample");
  const double h = static_cast<double>(sorted.size()) * p + 0.5;
  if (h <= 1.0) return sorted.front();
  if (h >= static_cast<double>(sorted.size())) return sorted.back();
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const double f = h - static_cast<double>(lo);
  return sorted[lo - 1] + f * (sorted[lo] - sorted[lo - 1]);
}

inline double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

/// Equal-tailed interval holding a fraction gamma of the sample.
inline std::pair<double, double> credible_interval(std::vector<double> values, double gamma) {
  detail::require(!values.empty(), "credible interval of an empty sample");
  detail::require(gamma > 0.0 && gamma <= 1.0, "credible level must lie in (0, 1]");
  std::sort(values.begin(), values.end());
  const double tail = (1.0 - gamma) / 2.0;
  return {quantile_sorted(values, tail), quantile_sorted(values, 1.0 - tail)};
}

inline double sample_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_variance(const std::vector<double>& v) {
  const double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

/// Monte Carlo standard error of the mean by non-overlapping batch means.
inline double batch_means_mcse(const std::vector<double>& v, std::size_t batches = 50) {
  detail::require(v.size() >= 2 * batches, "too few draws for batch means");
  const std::size_t b = v.size() / batches;
  std::vector<double> means(batches);
  for (std::size_t i = 0; i < batches; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < b; ++j) s += v[i * b + j];
    means[i] = s / static_cast<double>(b);
  }
  return std::sqrt(sample_variance(means) / static_cast<double>(batches));
}

namespace detail {

/// min(sd, IQR/1.34), falling back to sd when the IQR collapses.
inline double robust_scale(const std::vector<double>& v) {
  const double sd = std::sqrt(sample_variance(v));
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());
  const double iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
  const double r = iqr / 1.34;
  return r > 0.0 ? std::min(sd, r) : sd;
}

/// Gaussian smoothing of a regular lattice along one axis; weights beyond
/// four bandwidths are dropped.
inline void smooth_axis(std::vector<double>& grid, std::size_t nx, std::size_t ny, bool along_x, double h_cells) {
  const auto reach = static_cast<long>(std::ceil(4.0 * h_cells));
  std::vector<double> w(static_cast<std::size_t>(2 * reach + 1));
  for (long i = -reach; i <= reach; ++i) {
    const double z = static_cast<double>(i) / h_cells;
    w[static_cast<std::size_t>(i + reach)] = std::exp(-0.5 * z * z);
  }
  const std::size_t lines = along_x ? ny : nx, len = along_x ? nx : ny;
  std::vector<double> in(len), out(len);
  for (std::size_t l = 0; l < lines; ++l) {
    for (std::size_t i = 0; i < len; ++i) in[i] = along_x ? grid[l * nx + i] : grid[i * nx + l];
    for (std::size_t i = 0; i < len; ++i) {
      double s = 0.0;
      const long lo = std::max<long>(0, static_cast<long>(i) - reach);
      const long hi = std::min<long>(static_cast<long>(len) - 1, static_cast<long>(i) + reach);
      for (long j = lo; j <= hi; ++j) s += in[static_cast<std::size_t>(j)] * w[static_cast<std::size_t>(j - static_cast<long>(i) + reach)];
      out[i] = s;
    }
    for (std::size_t i = 0; i < len; ++i) (along_x ? grid[l * nx + i] : grid[i * nx + l]) = out[i];
  }
}

}  // namespace detail

/// Silverman's rule with a robust scale.
inline double silverman_bandwidth(const std::vector<double>& v) {
  return 0.9 * detail::robust_scale(v) * std::pow(static_cast<double>(v.size()), -0.2);
}

/// Mode of a 1-D Gaussian KDE evaluated on a lattice over the sample range.
inline double kde_mode_1d(const std::vector<double>& v, std::size_t lattice = 512) {
  detail::require(!v.empty(), "mode of an empty sample");
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  if (*mn == *mx) return *mn;
  const double h = silverman_bandwidth(v);
  if (!(h > 0.0)) return *mn;
  // Bin then smooth; same estimator as direct summation up to binning error.
  const std::size_t n = lattice;
  const double lo = *mn, step = (*mx - *mn) / static_cast<double>(n - 1);
  std::vector<double> grid(n, 0.0);
  for (double x : v) {
    const double pos = (x - lo) / step;
    const auto i = std::min(n - 2, static_cast<std::size_t>(pos));
    const double f = pos - static_cast<double>(i);
    grid[i] += 1.0 - f;
    grid[i + 1] += f;
  }
  detail::smooth_axis(grid, n, 1, true, h / step);
  const auto best = static_cast<std::size_t>(std::max_element(grid.begin(), grid.end()) - grid.begin());
  return lo + static_cast<double>(best) * step;
}

/// Binned Gaussian KDE of a bivariate sample on an n x n lattice.
class Kde2D {
public:
  Kde2D(const std::vector<double>& x, const std::vector<double>& y, std::size_t lattice = 128) : n_(lattice) {
    detail::require(x.size() == y.size() && x.size() >= 2, "bivariate KDE needs matching samples");
    detail::require(lattice >= 8, "KDE lattice too small");
    const double scale = std::pow(static_cast<double>(x.size()), -1.0 / 6.0);
    h_[0] = detail::robust_scale(x) * scale;
    h_[1] = detail::robust_scale(y) * scale;
    const std::array<const std::vector<double>*, 2> data{&x, &y};
    for (std::size_t d = 0; d < 2; ++d) {
      const auto [mn, mx] = std::minmax_element(data[d]->begin(), data[d]->end());
      if (!(h_[d] > 0.0)) h_[d] = std::max(1e-9, 1e-6 * std::max(std::abs(*mn), 1.0));
      lo_[d] = *mn - 4.0 * h_[d];
      step_[d] = (*mx + 4.0 * h_[d] - lo_[d]) / static_cast<double>(n_ - 1);
    }
    f_.assign(n_ * n_, 0.0);
    for (std::size_t s = 0; s < x.size(); ++s) {
      const double px = (x[s] - lo_[0]) / step_[0], py = (y[s] - lo_[1]) / step_[1];
      const auto i = std::min(n_ - 2, static_cast<std::size_t>(px));
      const auto j = std::min(n_ - 2, static_cast<std::size_t>(py));
      const double fx = px - static_cast<double>(i), fy = py - static_cast<double>(j);
      f_[j * n_ + i] += (1 - fx) * (1 - fy);
      f_[j * n_ + i + 1] += fx * (1 - fy);
      f_[(j + 1) * n_ + i] += (1 - fx) * fy;
      f_[(j + 1) * n_ + i + 1] += fx * fy;
    }
    detail::smooth_axis(f_, n_, n_, true, h_[0] / step_[0]);
    detail::smooth_axis(f_, n_, n_, false, h_[1] / step_[1]);
    const double norm = static_cast<double>(x.size()) * 2.0 * std::numbers::pi * h_[0] * h_[1];
    for (double& v : f_) v /= norm;
  }

  std::size_t lattice() const { return n_; }
  double node_x(std::size_t i) const { return lo_[0] + static_cast<double>(i) * step_[0]; }
  double node_y(std::size_t j) const { return lo_[1] + static_cast<double>(j) * step_[1]; }
  double step_x() const { return step_[0]; }
  double step_y() const { return step_[1]; }
  double bandwidth(std::size_t d) const { return h_[d]; }
  double node(std::size_t i, std::size_t j) const { return f_[j * n_ + i]; }

  /// Bilinear interpolation; zero outside the lattice.
  double operator()(double x, double y) const {
    const double px = (x - lo_[0]) / step_[0], py = (y - lo_[1]) / step_[1];
    if (!(px >= 0.0) || !(py >= 0.0) || px > static_cast<double>(n_ - 1) || py > static_cast<double>(n_ - 1)) return 0.0;
    const auto i = std::min(n_ - 2, static_cast<std::size_t>(px));
    const auto j = std::min(n_ - 2, static_cast<std::size_t>(py));
    const double fx = px - static_cast<double>(i), fy = py - static_cast<double>(j);
    return (1 - fx) * (1 - fy) * node(i, j) + fx * (1 - fy) * node(i + 1, j) + (1 - fx) * fy * node(i, j + 1) +
           fx * fy * node(i + 1, j + 1);
  }

  std::pair<double, double> argmax() const {
    const auto k = static_cast<std::size_t>(std::max_element(f_.begin(), f_.end()) - f_.begin());
    return {node_x(k % n_), node_y(k / n_)};
  }

private:
  std::size_t n_;
  std::array<double, 2> h_{}, lo_{}, step_{};
  std::vector<double> f_;
};

using Polyline = std::vector<std::pair<double, double>>;

/// Highest-density region of a bivariate sample at level gamma.
class HpdRegion {
public:
  HpdRegion(const std::vector<double>& x, const std::vector<double>& y, double gamma, std::size_t lattice = 128)
      : kde_(x, y, lattice), gamma_(gamma) {
    detail::require(gamma > 0.0 && gamma <= 1.0, "credible level must lie in (0, 1]");
    std::vector<double> dens(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) dens[i] = kde_(x[i], y[i]);
    std::sort(dens.begin(), dens.end());
    if (gamma >= 1.0) {
      level_ = dens.front();
    } else {
      // Highest gamma fraction of the sampled densities.
      const auto drop = static_cast<std::size_t>(std::floor((1.0 - gamma) * static_cast<double>(dens.size())));
      level_ = dens[std::min(drop, dens.size() - 1)];
    }
    std::size_t inside = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (kde_(x[i], y[i]) >= level_) ++inside;
    enclosed_ = static_cast<double>(inside) / static_cast<double>(x.size());
    area_ = measure_area();
    trace_contours();
  }

  double gamma() const { return gamma_; }
  double level() const { return level_; }
  double area() const { return area_; }
  /// Fraction of the input samples inside the region.
  double enclosed_fraction() const { return enclosed_; }
  bool contains(double x, double y) const { return kde_(x, y) >= level_; }
  const std::vector<Polyline>& contours() const { return contours_; }
  const Kde2D& density() const { return kde_; }

  /// Area of the intersection with another region, by sub-cell sampling of
  /// this region's lattice.
  double intersection_area(const HpdRegion& other) const {
    return integrate([&](double x, double y) { return contains(x, y) && other.contains(x, y); });
  }

private:
  static constexpr std::size_t kSub = 4;

  template <class Pred>
  double integrate(Pred&& inside) const {
    const std::size_t n = kde_.lattice();
    const double dx = kde_.step_x() / kSub, dy = kde_.step_y() / kSub;
    std::size_t hits = 0;
    for (std::size_t j = 0; j + 1 < n; ++j)
      for (std::size_t i = 0; i + 1 < n; ++i) {
        if (std::max({kde_.node(i, j), kde_.node(i + 1, j), kde_.node(i, j + 1), kde_.node(i + 1, j + 1)}) < level_) continue;
        for (std::size_t b = 0; b < kSub; ++b)
          for (std::size_t a = 0; a < kSub; ++a)
            if (inside(kde_.node_x(i) + (static_cast<double>(a) + 0.5) * dx, kde_.node_y(j) + (static_cast<double>(b) + 0.5) * dy))
              ++hits;
      }
    return static_cast<double>(hits) * dx * dy;
  }

  double measure_area() const {
    return integrate([&](double x, double y) { return contains(x, y); });
  }

  // Marching squares on the lattice; segments are stitched into polylines by
  // the lattice edges they cross.
  void trace_contours() {
    const std::size_t n = kde_.lattice();
    auto above = [&](std::size_t i, std::size_t j) { return kde_.node(i, j) >= level_; };
    // Edge ids: horizontal (i,j)-(i+1,j) -> 2*(j*n+i), vertical (i,j)-(i,j+1) -> 2*(j*n+i)+1.
    auto h_edge = [&](std::size_t i, std::size_t j) { return 2 * (j * n + i); };
    auto v_edge = [&](std::size_t i, std::size_t j) { return 2 * (j * n + i) + 1; };
    auto crossing = [&](std::size_t edge) -> std::pair<double, double> {
      const std::size_t cell = edge / 2, i = cell % n, j = cell / n;
      const std::size_t i2 = edge % 2 == 0 ? i + 1 : i, j2 = edge % 2 == 0 ? j : j + 1;
      const double a = kde_.node(i, j), b = kde_.node(i2, j2);
      const double t = a == b ? 0.5 : std::clamp((level_ - a) / (b - a), 0.0, 1.0);
      return {kde_.node_x(i) + t * (kde_.node_x(i2) - kde_.node_x(i)), kde_.node_y(j) + t * (kde_.node_y(j2) - kde_.node_y(j))};
    };
    std::vector<std::pair<std::size_t, std::size_t>> segments;
    for (std::size_t j = 0; j + 1 < n; ++j)
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const int code = (above(i, j) ? 1 : 0) | (above(i + 1, j) ? 2 : 0) | (above(i + 1, j + 1) ? 4 : 0) | (above(i, j + 1) ? 8 : 0);
        const std::size_t b = h_edge(i, j), r = v_edge(i + 1, j), t = h_edge(i, j + 1), l = v_edge(i, j);
        switch (code) {
          case 0: case 15: break;
          case 1: case 14: segments.emplace_back(l, b); break;
          case 2: case 13: segments.emplace_back(b, r); break;
          case 3: case 12: segments.emplace_back(l, r); break;
          case 4: case 11: segments.emplace_back(r, t); break;
          case 6: case 9: segments.emplace_back(b, t); break;
          case 7: case 8: segments.emplace_back(l, t); break;
          case 5: case 10: {
            const double centre = 0.25 * (kde_.node(i, j) + kde_.node(i + 1, j) + kde_.node(i, j + 1) + kde_.node(i + 1, j + 1));
            if ((centre >= level_) == (code == 5)) {
              segments.emplace_back(l, t);
              segments.emplace_back(b, r);
            } else {
              segments.emplace_back(l, b);
              segments.emplace_back(r, t);
            }
            break;
          }
        }
      }
    std::map<std::size_t, std::vector<std::size_t>> at_edge;
    for (std::size_t s = 0; s < segments.size(); ++s) {
      at_edge[segments[s].first].push_back(s);
      at_edge[segments[s].second].push_back(s);
    }
    std::vector<bool> used(segments.size(), false);
    auto other_end = [&](std::size_t s, std::size_t edge) { return segments[s].first == edge ? segments[s].second : segments[s].first; };
    auto next_segment = [&](std::size_t edge) -> std::size_t {
      for (std::size_t s : at_edge[edge])
        if (!used[s]) return s;
      return segments.size();
    };
    // Open chains first (they start at an edge with a single segment), then closed rings.
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t s0 = 0; s0 < segments.size(); ++s0) {
        if (used[s0]) continue;
        std::size_t start = segments[s0].first;
        if (pass == 0) {
          if (at_edge[segments[s0].first].size() == 1) start = segments[s0].first;
          else if (at_edge[segments[s0].second].size() == 1) start = segments[s0].second;
          else continue;
        }
        Polyline line{crossing(start)};
        std::size_t edge = start, s = s0;
        while (s < segments.size()) {
          used[s] = true;
          edge = other_end(s, edge);
          line.push_back(crossing(edge));
          s = next_segment(edge);
        }
        contours_.push_back(std::move(line));
      }
  }

  Kde2D kde_;
  double gamma_;
  double level_ = 0.0;
  double enclosed_ = 0.0;
  double area_ = 0.0;
  std::vector<Polyline> contours_;
};

inline void write_polylines_csv(std::ostream& out, const std::vector<Polyline>& lines) {
  out << "ring,vertex,x,y\n";
  for (std::size_t r = 0; r < lines.size(); ++r)
    for (std::size_t v = 0; v < lines[r].size(); ++v) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.10g,%.10g\n", r, v, lines[r][v].first, lines[r][v].second);
      out << buf;
    }
}

}  // namespace gravem
