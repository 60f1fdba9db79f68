#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <sstream>

#include "gravem/calibrate.hpp"
#include "support.hpp"

using namespace gravem;
using Catch::Approx;

namespace {

TrainingSet three_point_set() {
  TrainingSet ts;
  ts.points = {{0.2, 1, 1, 1}, {1.0, 1, 1, 1}, {1.7, 1, 1, 1}};
  ts.distances = {2.5, 1.1, 1.9};
  ts.pinned = {std::nullopt, 1.0, 1.0, 1.0};
  return ts;
}

Priors pinned_priors() {
  Priors pr;
  pr.pinned = {std::nullopt, 1.0, 1.0, 1.0};
  return pr;
}

// Predictive law at q by dense simple-kriging algebra with a GLS trend in theta'.
Prediction three_point_oracle(const TrainingSet& ts, const GpHyper& h, double jitter, const GravityParams& q) {
  const auto scaling = InputScaling::from_box(PriorBox{});
  Eigen::Matrix3d S;
  Eigen::Matrix<double, 3, 2> X;
  Eigen::Vector3d D, k;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) S(i, j) = gp_covariance(ts.points[i], ts.points[j], h, false, scaling);
    S(i, i) += h.nugget + jitter * h.sigma2;
    X(i, 0) = 1.0;
    X(i, 1) = ts.points[i].theta_prime;
    D[i] = ts.distances[i];
    k[i] = gp_covariance(q, ts.points[i], h, false, scaling);
  }
  const Eigen::Matrix3d Si = S.inverse();
  const Eigen::Vector2d beta = (X.transpose() * Si * X).inverse() * (X.transpose() * Si * D);
  const double mean = beta[0] + beta[1] * q.theta_prime + k.dot(Si * (D - X * beta));
  return {mean, h.sigma2 + h.nugget - k.dot(Si * k)};
}

PosteriorChain chain_from(const std::vector<double>& x, const std::vector<double>& y = {}) {
  PosteriorChain c;
  for (std::size_t i = 0; i < x.size(); ++i) {
    CalibrationSample s{{x[i], 1, 1, y.empty() ? 1.0 : y[i]}, 1.0};
    c.samples.push_back(s);
  }
  return c;
}

std::pair<std::vector<double>, std::vector<double>> bivariate_normal(std::size_t n, std::uint64_t seed, double sx, double sy,
                                                                     double r) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> z;
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = z(g), b = z(g);
    x[i] = sx * a;
    y[i] = sy * (r * a + std::sqrt(1 - r * r) * b);
  }
  return {x, y};
}

}  // namespace

TEST_CASE("log posterior support and peak") {
  const auto ts = three_point_set();
  const GpHyper h{0.5, 0.01, 1.5};
  const auto em = condition_emulator(ts, h);
  const auto pr = pinned_priors();
  const GravityParams q{0.8, 1, 1, 1};
  const auto p = em.predict(q);

  CHECK(log_posterior({q, 0.0}, em, pr) == -std::numeric_limits<double>::infinity());
  CHECK(log_posterior({q, -1.0}, em, pr) == -std::numeric_limits<double>::infinity());
  CHECK(log_posterior({{2.1, 1, 1, 1}, 1.0}, em, pr) == -std::numeric_limits<double>::infinity());
  CHECK(log_posterior({{0.8, 1.2, 1, 1}, 1.0}, em, pr) == -std::numeric_limits<double>::infinity());
  CHECK(std::isfinite(log_posterior({q, 1.0}, em, pr)));

  // normal term peaks at the predictive mean
  const double peak = normal_log_density(p.mean, p.mean, p.variance);
  for (double d = 0.05; d < 5.0; d += 0.05) CHECK(normal_log_density(d, p.mean, p.variance) <= peak);
}

TEST_CASE("log posterior matches a three point oracle") {
  const auto ts = three_point_set();
  const GpHyper h{0.8, 0.05, 2.0};
  const auto em = condition_emulator(ts, h);
  const auto pr = pinned_priors();
  for (double tp : {0.0, 0.35, 0.9, 1.3, 2.0})
    for (double d : {0.1, 1.0, 2.7}) {
      const GravityParams q{tp, 1, 1, 1};
      const auto o = three_point_oracle(ts, h, em.jitter(), q);
      const double expected = -0.5 * std::log(2 * std::numbers::pi * o.variance) -
                              (d - o.mean) * (d - o.mean) / (2 * o.variance) + std::log(1.0) - d;
      CHECK(std::abs(log_posterior({q, d}, em, pr) - expected) <= 1e-10);
    }
}

TEST_CASE("log posterior is concave in delta") {
  const auto em = condition_emulator(three_point_set(), GpHyper{0.5, 0.01, 1.5});
  const auto pr = pinned_priors();
  for (double tp : {0.1, 1.0, 1.9}) {
    std::vector<double> lp;
    for (double d = 0.01; d <= 10.0; d += 0.01) lp.push_back(log_posterior({{tp, 1, 1, 1}, d}, em, pr));
    for (std::size_t i = 1; i + 1 < lp.size(); ++i) CHECK(lp[i - 1] - 2 * lp[i] + lp[i + 1] <= 1e-9);
  }
}

TEST_CASE("log posterior is invariant to training row order") {
  const auto pts = [] {
    std::vector<GravityParams> v;
    Substream rng(4);
    for (int i = 0; i < 15; ++i) v.push_back({2 * rng.uniform(), 2 * rng.uniform(), 2 * rng.uniform(), 2 * rng.uniform()});
    return v;
  }();
  TrainingSet a;
  a.points = pts;
  for (const auto& p : pts) a.distances.push_back(1 + p.theta_prime * p.rho + 0.2 * std::sin(4 * p.tau1));
  TrainingSet b;
  for (std::size_t i = pts.size(); i-- > 0;) {
    b.points.push_back(a.points[i]);
    b.distances.push_back(a.distances[i]);
  }
  const GpHyper h{0.6, 0.02, 2.2};
  const auto ea = condition_emulator(a, h), eb = condition_emulator(b, h);
  Substream rng(8);
  for (int i = 0; i < 20; ++i) {
    const CalibrationSample s{{2 * rng.uniform(), 2 * rng.uniform(), 2 * rng.uniform(), 2 * rng.uniform()}, 0.1 + 3 * rng.uniform()};
    CHECK(log_posterior(s, ea, Priors{}) == Approx(log_posterior(s, eb, Priors{})).epsilon(1e-9));
  }
}

TEST_CASE("slice sampler leaves known targets invariant") {
  SECTION("standard normal") {
    Substream rng(101);
    auto lf = [](double x) { return -0.5 * x * x; };
    std::vector<double> xs;
    double x = 0.0, l = lf(x);
    for (int i = 0; i < 100000; ++i) {
      const auto r = slice_sample(lf, x, l, 1.0, 10, rng);
      x = r.x;
      l = r.log_f;
      xs.push_back(x);
    }
    CHECK(std::abs(sample_mean(xs)) <= 3 * batch_means_mcse(xs));
    CHECK(sample_variance(xs) == Approx(1.0).margin(0.03));
  }
  SECTION("exponential") {
    Substream rng(102);
    auto lf = [](double x) { return x > 0 ? -x : -std::numeric_limits<double>::infinity(); };
    std::vector<double> xs;
    double x = 1.0, l = lf(x);
    for (int i = 0; i < 100000; ++i) {
      const auto r = slice_sample(lf, x, l, 1.0, 10, rng);
      REQUIRE(r.x > 0.0);
      x = r.x;
      l = r.log_f;
      xs.push_back(x);
    }
    CHECK(std::abs(sample_mean(xs) - 1.0) <= 3 * batch_means_mcse(xs));
  }
  SECTION("flat target passes a KS test") {
    Substream rng(103);
    auto lf = [](double x) { return x >= 0 && x <= 2 ? 0.0 : -std::numeric_limits<double>::infinity(); };
    std::vector<double> xs;
    double x = 1.0, l = 0.0;
    for (int i = 0; i < 100000; ++i) {
      const auto r = slice_sample(lf, x, l, 1.0, 10, rng);
      x = r.x;
      l = r.log_f;
      if (i % 10 == 0) xs.push_back(x);
    }
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double F = xs[i] / 2.0;
      ks = std::max({ks, std::abs(F - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - F)});
    }
    CHECK(ks < 1.628 / std::sqrt(n));
  }
  SECTION("coordinate update only touches its axis") {
    Substream rng(104);
    std::vector<double> pt{0.3, 0.7};
    auto lf = [](const std::vector<double>& v) { return -0.5 * (v[0] * v[0] + v[1] * v[1]); };
    for (int i = 0; i < 100; ++i) slice_sample_coordinate(lf, pt, 0, rng, 1.0);
    CHECK(pt[1] == 0.7);
  }
  SECTION("errors") {
    Substream rng(105);
    auto lf = [](double) { return 0.0; };
    CHECK_THROWS_AS(slice_sample(lf, 0.0, -std::numeric_limits<double>::infinity(), 1.0, 10, rng), NumericError);
    auto spike = [](double x) { return x == 0.5 ? 0.0 : -std::numeric_limits<double>::infinity(); };
    CHECK_THROWS_AS(slice_sample(spike, 0.5, 0.0, 1.0, 10, rng), NumericError);
  }
}

TEST_CASE("run_mcmc is reproducible and respects pinning") {
  const auto em = condition_emulator(three_point_set(), GpHyper{0.5, 0.01, 1.5});
  const auto pr = pinned_priors();
  const auto init = initial_sample(em, pr);
  CHECK(init.theta.theta_prime == 1.0);
  CHECK(init.delta == 1.1);

  const auto one = run_mcmc(em, pr, 1, init, {.seed = 5, .burn_in = 0});
  REQUIRE(one.size() == 1);
  CHECK(run_mcmc(em, pr, 1, init, {.seed = 5, .burn_in = 0}).samples == one.samples);

  const auto a = run_mcmc(em, pr, 2000, init, {.seed = 9});
  const auto b = run_mcmc(em, pr, 2000, init, {.seed = 9});
  const auto c = run_mcmc(em, pr, 2000, init, {.seed = 10});
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  CHECK(a.burn_in == 200);
  for (const auto& s : a.samples) {
    CHECK(s.theta.tau1 == 1.0);
    CHECK(s.theta.tau2 == 1.0);
    CHECK(s.theta.rho == 1.0);
    CHECK(std::isfinite(log_posterior(s, em, pr)));
  }

  auto off = pr;
  off.no_discrepancy = true;
  for (const auto& s : run_mcmc(em, off, 200, init, {.seed = 1}).samples) CHECK(s.delta == kDeltaFloor);

  CHECK_THROWS_AS(run_mcmc(em, pr, 0, init), DataError);
}

TEST_CASE("chain mode recovers the minimum of a quadratic distance surface") {
  TrainingSet ts;
  ts.pinned = {std::nullopt, 1.0, 1.0, std::nullopt};
  const auto grid = make_grid(PriorBox{}, {11, 2, 2, 11}, ts.pinned);
  ts.points = grid.points;
  const double t0 = 1.2, r0 = 0.8;
  for (const auto& p : ts.points)
    ts.distances.push_back(1.0 + 20.0 * ((p.theta_prime - t0) * (p.theta_prime - t0) + (p.rho - r0) * (p.rho - r0)));
  const auto em = fit_emulator(ts, FitOptions{.starts = 4, .seed = 3});
  Priors pr;
  pr.pinned = ts.pinned;
  const auto chain = run_mcmc(em, pr, 20000, initial_sample(em, pr), {.seed = 21});
  const auto mode = posterior_mode(chain, {0, 3});
  CHECK(std::abs(mode[0] - t0) <= grid.spacing(0));
  CHECK(std::abs(mode[1] - r0) <= grid.spacing(3));
}

TEST_CASE("posterior mode") {
  std::mt19937_64 g(17);
  SECTION("normal draws") {
    std::normal_distribution<double> z(0.5, 0.01);
    std::vector<double> x(5000);
    for (auto& v : x) v = z(g);
    CHECK(std::abs(posterior_mode(chain_from(x), {0})[0] - 0.5) <= 0.01);
  }
  SECTION("point mass") {
    const auto c = chain_from(std::vector<double>(1500, 0.42));
    CHECK(posterior_mode(c, {0})[0] == 0.42);
    CHECK(posterior_mode(c, {0, 3}) == std::vector<double>{0.42, 1.0});
  }
  SECTION("bimodal") {
    std::normal_distribution<double> z(0.0, 0.1);
    std::bernoulli_distribution pick(0.35);
    std::vector<double> x(20000), y(20000);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const bool low = pick(g);
      x[i] = (low ? 0.4 : 1.5) + z(g);
      y[i] = (low ? 1.6 : 0.5) + z(g);
    }
    const auto c = chain_from(x, y);
    CHECK(posterior_mode(c, {0})[0] == Approx(1.5).margin(0.05));
    const auto m = posterior_mode(c, {0, 3});
    CHECK(m[0] == Approx(1.5).margin(0.05));
    CHECK(m[1] == Approx(0.5).margin(0.05));
  }
  CHECK_THROWS_AS(posterior_mode(chain_from(std::vector<double>(999, 1.0)), {0}), DataError);
}

TEST_CASE("credible regions") {
  const double sx = 0.3, sy = 0.2, r = 0.5;
  const auto [x1, y1] = bivariate_normal(20000, 1, sx, sy, r);
  const auto c1 = chain_from(x1, y1);
  const auto reg = credible_region_2d(c1, 0, 3, 0.95);
  const double ellipse = std::numbers::pi * (-2.0 * std::log(0.05)) * sx * sy * std::sqrt(1 - r * r);
  CHECK(std::abs(reg.area() / ellipse - 1.0) <= 0.15);
  CHECK(std::abs(reg.enclosed_fraction() - 0.95) <= 0.02);
  CHECK_FALSE(reg.contours().empty());

  const auto all = credible_region_2d(c1, 0, 3, 1.0);
  for (std::size_t i = 0; i < x1.size(); ++i) CHECK(all.contains(x1[i], y1[i]));
  CHECK(all.enclosed_fraction() == 1.0);

  const auto [x2, y2] = bivariate_normal(20000, 2, sx, sy, r);
  const auto reg2 = credible_region_2d(chain_from(x2, y2), 0, 3, 0.95);
  const double overlap = reg.region.intersection_area(reg2.region);
  CHECK(overlap / std::max(reg.area(), reg2.area()) >= 0.8);

  CHECK_THROWS_AS(credible_region_2d(chain_from(std::vector<double>(4999, 1.0), std::vector<double>(4999, 1.0)), 0, 3),
                  DataError);
  CHECK_THROWS_AS(credible_region_2d(c1, 0, 0), DataError);

  std::stringstream out;
  write_region_csv(out, reg);
  CHECK(out.str().find("# x=theta_prime") == 0);
}

TEST_CASE("credible intervals") {
  CHECK(credible_interval({3.0, 3.0, 3.0}, 0.9) == std::pair{3.0, 3.0});
  std::vector<double> seq;
  for (int i = 1; i <= 100; ++i) seq.push_back(i);
  const auto [lo, hi] = credible_interval(seq, 0.9);
  CHECK(lo == Approx(5.5));
  CHECK(hi == Approx(95.5));

  std::mt19937_64 g(5);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> xs(1000000);
  for (auto& v : xs) v = e(g);
  const auto [elo, ehi] = credible_interval(xs, 0.95);
  CHECK(elo == Approx(-std::log(0.975)).margin(1e-3));
  CHECK(ehi == Approx(-std::log(0.025)).margin(0.03));
  CHECK_THROWS_AS(credible_interval({}, 0.9), DataError);
}

TEST_CASE("chain csv round trip") {
  const auto em = condition_emulator(three_point_set(), GpHyper{0.5, 0.01, 1.5});
  const auto pr = pinned_priors();
  const auto chain = run_mcmc(em, pr, 50, initial_sample(em, pr), {.seed = 3, .thin = 2});
  std::stringstream io;
  write_chain_csv(io, chain);
  const auto back = read_chain_csv(io);
  CHECK(back.samples == chain.samples);
  CHECK(back.seed == 3);
  CHECK(back.thin == 2);
  CHECK(back.burn_in == chain.burn_in);
  CHECK(back.pinned == chain.pinned);
  CHECK(back.widths == chain.widths);
  std::stringstream bad("iteration,theta_prime,tau1,tau2,rho,delta\n0,1,1,1,1,-1\n");
  CHECK_THROWS_AS(read_chain_csv(bad), DataError);
}
