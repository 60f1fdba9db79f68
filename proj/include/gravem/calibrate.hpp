#pragma once

// Second-stage inference: sample (Theta*, delta) from
//   f(delta, Theta*) ∝ N(delta; mu(Theta*), v(Theta*)) * exp(-delta) * 1{Theta* in box}
// where (mu, v) is the emulator's predictive law at Theta*.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gravem/density.hpp"
#include "gravem/design.hpp"
#include "gravem/emulator.hpp"
#include "gravem/error.hpp"
#include "gravem/hash.hpp"
#include "gravem/model.hpp"
#include "gravem/rng.hpp"

namespace gravem {

inline constexpr std::size_t kChainCoords = kGravityAxes + 1;  // gravity axes then delta
inline constexpr std::size_t kDeltaIndex = kGravityAxes;
inline constexpr std::array<const char*, kChainCoords> kChainNames = {"theta_prime", "tau1", "tau2", "rho", "delta"};

/// Floor used in place of delta = 0 when the discrepancy is switched off.
inline constexpr double kDeltaFloor = 1e-6;

struct CalibrationSample {
  GravityParams theta;
  double delta = 1.0;

  double operator[](std::size_t i) const { return i == kDeltaIndex ? delta : theta[i]; }
  double& operator[](std::size_t i) { return i == kDeltaIndex ? delta : theta[i]; }
  friend bool operator==(const CalibrationSample&, const CalibrationSample&) = default;
};

struct Priors {
  PriorBox box;
  double delta_rate = 1.0;  // exponential prior on delta
  PinnedAxes pinned{};
  /// Hold delta at kDeltaFloor instead of sampling it.
  bool no_discrepancy = false;

  bool is_free(std::size_t axis) const { return axis == kDeltaIndex ? !no_discrepancy : !pinned[axis].has_value(); }
};

inline double normal_log_density(double x, double mean, double variance) {
  const double z = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + z * z / variance);
}

namespace detail {

inline bool in_support(const GravityParams& g, const Priors& pr) {
  for (std::size_t a = 0; a < kGravityAxes; ++a) {
    if (pr.pinned[a]) {
      if (g[a] != *pr.pinned[a]) return false;
    } else if (!pr.box.contains(a, g[a])) {
      return false;
    }
  }
  return true;
}

inline double delta_log_density(double delta, const Prediction& p, const Priors& pr) {
  if (!(delta > 0.0)) return -std::numeric_limits<double>::infinity();
  return normal_log_density(delta, p.mean, p.variance) + std::log(pr.delta_rate) - pr.delta_rate * delta;
}

}  // namespace detail

/// Unnormalized log posterior; -inf outside the prior support.
inline double log_posterior(const CalibrationSample& s, const TrainedEmulator& em, const Priors& pr) {
  if (!(s.delta > 0.0) || !detail::in_support(s.theta, pr)) return -std::numeric_limits<double>::infinity();
  return detail::delta_log_density(s.delta, em.predict(s.theta), pr);
}

struct SliceResult {
  double x = 0.0;
  double log_f = 0.0;
  std::size_t evaluations = 0;
};

/// One univariate slice-sampling update: stepping out by at most
/// `max_steps` widths, then shrinkage. `log_fx` is log f at x.
template <class LogF, class Rng>
SliceResult slice_sample(LogF&& log_f, double x, double log_fx, double width, std::size_t max_steps, Rng& rng) {
  if (!std::isfinite(log_fx)) throw NumericError("slice sampler started at a point of zero density");
  detail::require(width > 0.0, "slice width must be positive");
  auto u01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  SliceResult res{x, log_fx, 0};
  const double level = log_fx + std::log1p(-u01());  // log(u * f(x)), u in (0,1]
  double lo = x - width * u01();
  double hi = lo + width;
  const auto j_steps = static_cast<std::size_t>(std::floor(static_cast<double>(max_steps) * u01()));
  std::size_t k_steps = max_steps > 0 ? max_steps - 1 - j_steps : 0;
  for (std::size_t j = j_steps; j > 0; --j) {
    ++res.evaluations;
    if (!(log_f(lo) > level)) break;
    lo -= width;
  }
  for (; k_steps > 0; --k_steps) {
    ++res.evaluations;
    if (!(log_f(hi) > level)) break;
    hi += width;
  }
  for (;;) {
    const double cand = lo + (hi - lo) * u01();
    const double lf = log_f(cand);
    ++res.evaluations;
    if (lf > level) {
      res.x = cand;
      res.log_f = lf;
      return res;
    }
    if (cand < x) lo = cand;
    else hi = cand;
    if (hi - lo <= 1e-14 * std::max(1.0, std::abs(x)))
      throw NumericError("slice collapsed without finding an acceptable point");
  }
}

/// Slice update of one coordinate of a multivariate point.
template <class LogF, class Rng>
SliceResult slice_sample_coordinate(LogF&& log_f, std::vector<double>& point, std::size_t axis, Rng& rng, double width,
                                    std::size_t max_steps = 10) {
  detail::require(axis < point.size(), "slice axis out of range");
  auto along = [&](double v) {
    const double keep = point[axis];
    point[axis] = v;
    const double r = log_f(point);
    point[axis] = keep;
    return r;
  };
  SliceResult r = slice_sample(along, point[axis], log_f(point), width, max_steps, rng);
  point[axis] = r.x;
  return r;
}

struct McmcOptions {
  std::uint64_t seed = 0;
  /// Sweeps discarded before recording; negative means 10% of the chain length.
  long long burn_in = -1;
  std::size_t thin = 1;
  std::size_t max_steps = 10;
  /// Per-coordinate slice widths; zero entries take the defaults (box side / 10, 1 for delta).
  std::array<double, kChainCoords> widths{};
};

struct PosteriorChain {
  std::vector<CalibrationSample> samples;
  std::uint64_t seed = 0;
  std::array<double, kChainCoords> widths{};
  PinnedAxes pinned{};
  bool no_discrepancy = false;
  std::size_t burn_in = 0;
  std::size_t thin = 1;
  std::size_t evaluations = 0;
  std::string emulator_hash;
  CalibrationSample init;

  std::size_t size() const { return samples.size(); }
  std::vector<double> coordinate(std::size_t i) const {
    std::vector<double> v;
    v.reserve(samples.size());
    for (const auto& s : samples) v.push_back(s[i]);
    return v;
  }
};

/// Chain start: the design point with the smallest distance, delta = that distance.
inline CalibrationSample initial_sample(const TrainedEmulator& em, const Priors& pr) {
  const auto& D = em.responses();
  std::size_t best = 0;
  for (std::size_t i = 1; i < D.size(); ++i)
    if (D[i] < D[best]) best = i;
  CalibrationSample s{em.points()[best], D[best]};
  for (std::size_t a = 0; a < kGravityAxes; ++a)
    if (pr.pinned[a]) s.theta[a] = *pr.pinned[a];
  if (pr.no_discrepancy || !(s.delta > 0.0)) s.delta = kDeltaFloor;
  return s;
}

/// Sequential univariate slice sampling over the free coordinates in the
/// order theta', tau1, tau2, rho, delta.
inline PosteriorChain run_mcmc(const TrainedEmulator& em, const Priors& pr, std::size_t n, const CalibrationSample& init,
                               const McmcOptions& opt = {}) {
  detail::require(n >= 1, "chain length must be >= 1");
  detail::require(opt.thin >= 1, "thinning must be >= 1");
  PosteriorChain chain;
  chain.seed = opt.seed;
  chain.pinned = pr.pinned;
  chain.no_discrepancy = pr.no_discrepancy;
  chain.thin = opt.thin;
  chain.burn_in = opt.burn_in < 0 ? n / 10 : static_cast<std::size_t>(opt.burn_in);
  chain.emulator_hash = hex64(em.content_hash());
  for (std::size_t i = 0; i < kChainCoords; ++i)
    chain.widths[i] = opt.widths[i] > 0.0 ? opt.widths[i] : (i == kDeltaIndex ? 1.0 : pr.box.side(i) / 10.0);

  CalibrationSample cur = init;
  if (pr.no_discrepancy) cur.delta = kDeltaFloor;
  Prediction pred = em.predict(cur.theta);
  double lp = detail::in_support(cur.theta, pr) ? detail::delta_log_density(cur.delta, pred, pr)
                                                 : -std::numeric_limits<double>::infinity();
  if (!std::isfinite(lp)) throw NumericError("chain initial point has zero posterior density");
  chain.init = cur;

  const std::size_t sweeps = chain.burn_in + n * opt.thin;
  chain.samples.reserve(n);
  for (std::size_t sweep = 0; sweep < sweeps; ++sweep) {
    for (std::size_t c = 0; c < kChainCoords; ++c) {
      if (!pr.is_free(c)) continue;
      Substream rng(derive_key(opt.seed, 0x736c696365ULL, sweep, c));
      SliceResult r;
      if (c == kDeltaIndex) {
        // Theta is fixed during the delta update, so its prediction is reused.
        r = slice_sample([&](double d) { return detail::delta_log_density(d, pred, pr); }, cur.delta, lp, chain.widths[c],
                         opt.max_steps, rng);
        cur.delta = r.x;
      } else {
        Prediction trial_pred;
        auto along = [&](double v) {
          CalibrationSample t = cur;
          t.theta[c] = v;
          if (!pr.box.contains(c, v)) return -std::numeric_limits<double>::infinity();
          trial_pred = em.predict(t.theta);
          return detail::delta_log_density(t.delta, trial_pred, pr);
        };
        r = slice_sample(along, cur.theta[c], lp, chain.widths[c], opt.max_steps, rng);
        cur.theta[c] = r.x;
        pred = trial_pred;  // the last evaluation is the accepted point
      }
      lp = r.log_f;
      chain.evaluations += r.evaluations;
    }
    if (sweep >= chain.burn_in && (sweep - chain.burn_in) % opt.thin == 0) chain.samples.push_back(cur);
  }
  return chain;
}

// ---------------------------------------------------------------------------
// Posterior summaries

/// KDE mode of the chain over a subset of coordinates (0-3 gravity axes, 4 =
/// delta). Pairs use the bivariate lattice KDE; other subsets use marginal modes.
inline std::vector<double> posterior_mode(const PosteriorChain& chain, const std::vector<std::size_t>& coords) {
  detail::require(chain.size() >= 1000, "posterior mode needs at least 1000 samples");
  for (std::size_t c : coords) detail::require(c < kChainCoords, "chain coordinate out of range");
  if (coords.size() == 2) {
    const auto x = chain.coordinate(coords[0]), y = chain.coordinate(coords[1]);
    const bool x_const = std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
    const bool y_const = std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); });
    if (!x_const && !y_const) {
      const auto m = Kde2D(x, y).argmax();
      return {m.first, m.second};
    }
  }
  std::vector<double> out;
  for (std::size_t c : coords) out.push_back(kde_mode_1d(chain.coordinate(c)));
  return out;
}

struct CredibleRegion2D {
  std::size_t x_coord = 0, y_coord = 3;
  HpdRegion region;

  double gamma() const { return region.gamma(); }
  double area() const { return region.area(); }
  double enclosed_fraction() const { return region.enclosed_fraction(); }
  bool contains(double x, double y) const { return region.contains(x, y); }
  const std::vector<Polyline>& contours() const { return region.contours(); }
};

inline CredibleRegion2D credible_region_2d(const PosteriorChain& chain, std::size_t x_coord, std::size_t y_coord,
                                           double gamma = 0.95) {
  detail::require(chain.size() >= 5000, "credible region needs at least 5000 samples");
  detail::require(x_coord < kChainCoords && y_coord < kChainCoords && x_coord != y_coord, "invalid coordinate pair");
  return {x_coord, y_coord, HpdRegion(chain.coordinate(x_coord), chain.coordinate(y_coord), gamma)};
}

inline void write_region_csv(std::ostream& out, const CredibleRegion2D& r) {
  out << "# x=" << kChainNames[r.x_coord] << "\n# y=" << kChainNames[r.y_coord] << "\n# gamma=" << format_double(r.gamma())
      << "\n# level=" << format_double(r.region.level()) << "\n# area=" << format_double(r.area())
      << "\n# enclosed=" << format_double(r.enclosed_fraction()) << '\n';
  write_polylines_csv(out, r.contours());
}

// ---------------------------------------------------------------------------
// Chain persistence

inline void write_chain_csv(std::ostream& out, const PosteriorChain& c) {
  out << "# format=gravem-chain/1\n";
  out << "# seed=" << c.seed << '\n';
  out << "# widths=";
  for (std::size_t i = 0; i < kChainCoords; ++i) out << (i ? ";" : "") << format_double(c.widths[i]);
  out << '\n';
  out << "# pinned=" << detail::pinned_to_string(c.pinned) << '\n';
  out << "# no_discrepancy=" << (c.no_discrepancy ? 1 : 0) << '\n';
  out << "# burn_in=" << c.burn_in << '\n';
  out << "# thin=" << c.thin << '\n';
  out << "# evaluations=" << c.evaluations << '\n';
  out << "# emulator_hash=" << c.emulator_hash << '\n';
  out << "iteration,theta_prime,tau1,tau2,rho,delta\n";
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    const auto& s = c.samples[i];
    out << i + 1;
    for (std::size_t k = 0; k < kChainCoords; ++k) out << ',' << format_double(s[k]);
    out << '\n';
  }
}

inline PosteriorChain read_chain_csv(std::istream& in) {
  PosteriorChain c;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2), value = line.substr(eq + 1);
      if (key == "seed") c.seed = std::stoull(value);
      else if (key == "pinned") c.pinned = detail::pinned_from_string(value);
      else if (key == "no_discrepancy") c.no_discrepancy = value == "1";
      else if (key == "burn_in") c.burn_in = std::stoul(value);
      else if (key == "thin") c.thin = std::stoul(value);
      else if (key == "evaluations") c.evaluations = std::stoul(value);
      else if (key == "emulator_hash") c.emulator_hash = value;
      else if (key == "widths") {
        const auto f = detail::split(value, ';');
        for (std::size_t i = 0; i < kChainCoords && i < f.size(); ++i) c.widths[i] = std::stod(f[i]);
      }
      continue;
    }
    if (!header) {
      if (line != "iteration,theta_prime,tau1,tau2,rho,delta") throw DataError("chain csv: unexpected header");
      header = true;
      continue;
    }
    const auto f = detail::split(line, ',');
    if (f.size() != kChainCoords + 1) throw DataError("chain csv line " + std::to_string(lineno) + ": expected 6 fields");
    CalibrationSample s;
    try {
      for (std::size_t k = 0; k < kChainCoords; ++k) s[k] = std::stod(f[k + 1]);
    } catch (const std::exception&) {
      throw DataError("chain csv line " + std::to_string(lineno) + ": bad number");
    }
    if (!(s.delta > 0.0)) throw DataError("chain csv line " + std::to_string(lineno) + ": delta must be positive");
    c.samples.push_back(s);
  }
  if (!header) throw DataError("chain csv has no header");
  return c;
}

}  // namespace gravem
