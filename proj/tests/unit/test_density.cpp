#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "gravem/density.hpp"

using namespace gravem;
using Catch::Approx;

TEST_CASE("hazen quantiles") {
  const std::vector<double> s{1, 2, 3, 4};
  CHECK(quantile_sorted(s, 0.5) == 2.5);
  CHECK(quantile_sorted(s, 0.25) == 1.5);
  CHECK(quantile_sorted(s, 0.0) == 1.0);
  CHECK(quantile_sorted(s, 1.0) == 4.0);
  CHECK(quantile_sorted({7.0}, 0.3) == 7.0);
  CHECK(median({5, 1, 3}) == 3.0);
  CHECK_THROWS_AS(quantile({}, 0.5), DataError);
  CHECK_THROWS_AS(credible_interval({1.0}, 0.0), DataError);
}

TEST_CASE("moments and batch means") {
  CHECK(sample_mean({1, 2, 3}) == 2.0);
  CHECK(sample_variance({1, 2, 3}) == 1.0);
  std::mt19937_64 g(1);
  std::normal_distribution<double> z;
  std::vector<double> iid(100000);
  for (auto& v : iid) v = z(g);
  CHECK(batch_means_mcse(iid) == Approx(1.0 / std::sqrt(1e5)).epsilon(0.3));
  CHECK_THROWS_AS(batch_means_mcse(std::vector<double>(10, 1.0)), DataError);
}

TEST_CASE("kde modes") {
  std::mt19937_64 g(2);
  std::normal_distribution<double> z(3.0, 0.5);
  std::vector<double> v(20000);
  for (auto& x : v) x = z(g);
  CHECK(kde_mode_1d(v) == Approx(3.0).margin(0.1));
  CHECK(kde_mode_1d({2.0, 2.0}) == 2.0);
  CHECK(silverman_bandwidth(v) == Approx(0.9 * 0.5 * std::pow(20000.0, -0.2)).epsilon(0.05));

  std::vector<double> x(20000), y(20000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = z(g);
    y[i] = -1.0 + 0.5 * (z(g) - 3.0);
  }
  const Kde2D kde(x, y);
  const auto [mx, my] = kde.argmax();
  CHECK(mx == Approx(3.0).margin(0.1));
  CHECK(my == Approx(-1.0).margin(0.05));
  double mass = 0.0;
  for (std::size_t i = 0; i < kde.lattice(); ++i)
    for (std::size_t j = 0; j < kde.lattice(); ++j) mass += kde.node(i, j) * kde.step_x() * kde.step_y();
  CHECK(mass == Approx(1.0).margin(0.05));
  CHECK(kde(100.0, 0.0) == 0.0);
}

TEST_CASE("hpd region encloses its level") {
  std::mt19937_64 g(3);
  std::normal_distribution<double> z;
  std::vector<double> x(10000), y(10000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = z(g);
    y[i] = 2.0 * z(g);
  }
  for (double gamma : {0.5, 0.8, 0.95}) {
    const HpdRegion r(x, y, gamma);
    CHECK(std::abs(r.enclosed_fraction() - gamma) <= 0.02);
    const double ellipse = std::numbers::pi * -2.0 * std::log(1.0 - gamma) * 2.0;
    CHECK(r.area() == Approx(ellipse).epsilon(0.15));
    CHECK(r.contains(0.0, 0.0));
    CHECK_FALSE(r.contains(10.0, 10.0));
    REQUIRE_FALSE(r.contours().empty());
    for (const auto& line : r.contours()) CHECK(line.front() == line.back());
    CHECK(r.intersection_area(r) == Approx(r.area()).epsilon(0.02));
  }
  std::stringstream out;
  write_polylines_csv(out, HpdRegion(x, y, 0.9).contours());
  CHECK(out.str().rfind("ring,vertex,x,y\n", 0) == 0);
}
