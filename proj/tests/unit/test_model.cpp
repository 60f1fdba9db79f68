#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gravem/model.hpp"
#include "support.hpp"

using namespace gravem;
using Catch::Approx;

TEST_CASE("seasonal beta follows the biweekly table and wraps annually") {
  LocalDynamics local;
  CHECK(seasonal_beta(local, 1) == 1.24);
  CHECK(seasonal_beta(local, 18) == 0.63);
  CHECK(seasonal_beta(local, 27) == seasonal_beta(local, 1));
  for (long long t = 1; t <= 100; ++t) CHECK(seasonal_beta(local, t) == seasonal_beta(local, t + 26));
  CHECK(local.alpha == 0.97);
}

TEST_CASE("theta reparametrization") {
  CHECK(theta_from_reparam(0.0) == 1.0);
  CHECK(theta_from_reparam(0.2) == Approx(0.1).epsilon(1e-15));
  // 10^-3.55 to 12 significant digits
  CHECK(theta_from_reparam(0.71) == Approx(2.81838293126e-4).epsilon(1e-10));
  for (int i = 0; i <= 200; ++i) {
    const double tp = 0.01 * i;
    const double back = reparam_from_theta(theta_from_reparam(tp));
    CHECK(std::abs(back - tp) <= 1e-12 * std::max(1.0, tp));
  }
}

TEST_CASE("gravity mean hand computations") {
  SECTION("two cities, all weights collapse") {
    DistanceMatrix d(2);
    d(0, 1) = d(1, 0) = 7.0;
    CHECK(gravity_mean(0, std::vector<std::int64_t>{0, 5}, CouplingParams{1.0, 0.0, 1.0, 0.0}, 123.0, d) == 5.0);
  }
  SECTION("three cities") {
    DistanceMatrix d(3);
    d(0, 1) = d(1, 0) = 2.0;
    d(0, 2) = d(2, 0) = 3.0;
    d(1, 2) = d(2, 1) = 4.0;
    CHECK(gravity_mean(0, std::vector<std::int64_t>{100, 4, 9}, CouplingParams{1.0, 1.0, 1.0, 1.0}, 10.0, d) == Approx(50.0));
  }
  SECTION("no infecteds elsewhere") {
    DistanceMatrix d(3);
    d(0, 1) = d(1, 0) = d(0, 2) = d(2, 0) = d(1, 2) = d(2, 1) = 1.5;
    CHECK(gravity_mean(0, std::vector<std::int64_t>{40, 0, 0}, CouplingParams{0.3, 0.7, 1.2, 2.0}, 1e5, d) == 0.0);
  }
  SECTION("nonpositive distance is rejected") {
    DistanceMatrix d(2);
    CHECK_THROWS_AS(gravity_mean(0, std::vector<std::int64_t>{0, 3}, CouplingParams{}, 10.0, d), DataError);
  }
}

TEST_CASE("gravity mean is invariant under relabelling and monotone") {
  const std::vector<double> x{0, 3, 10, 4}, y{0, 4, 1, 9};
  const auto d = DistanceMatrix::planar(x, y);
  const CouplingParams c{0.01, 0.8, 0.9, 1.3};
  const std::vector<std::int64_t> I{7, 2, 11, 5};
  // swap cities 1 and 3
  const auto dp = DistanceMatrix::planar({0, 4, 10, 3}, {0, 9, 1, 4});
  CHECK(gravity_mean(0, I, c, 5000.0, d) == Approx(gravity_mean(0, std::vector<std::int64_t>{7, 5, 11, 2}, c, 5000.0, dp)));

  auto more = I;
  more[2] += 4;
  CHECK(gravity_mean(0, more, c, 5000.0, d) >= gravity_mean(0, I, c, 5000.0, d));

  double prev = gravity_mean(0, I, CouplingParams{0.01, 0.8, 0.9, 0.0}, 5000.0, d);
  for (double rho = 0.25; rho <= 2.0; rho += 0.25) {
    const double m = gravity_mean(0, I, CouplingParams{0.01, 0.8, 0.9, rho}, 5000.0, d);
    CHECK(m < prev);
    prev = m;
  }
}

TEST_CASE("influx and poisson draws have the right moments") {
  SECTION("degenerate cases draw nothing") {
    Substream a(1), b(1);
    CHECK(sample_influx(0.0, a) == 0.0);
    CHECK(sample_poisson(0.0, a) == 0);
    CHECK(a() == b());
    CHECK_THROWS_AS(sample_poisson(std::nan(""), a), NumericError);
    CHECK_THROWS_AS(sample_influx(-1.0, a), NumericError);
  }
  SECTION("gamma with shape 3.5") {
    Substream rng(derive_key(42, 1));
    std::vector<double> v(100000);
    for (auto& x : v) x = sample_influx(3.5, rng);
    const double se = std::sqrt(3.5 / v.size());
    CHECK(std::abs(testing::mean_of(v) - 3.5) < 3 * se);
    // Var of the sample variance for Gamma(k,1): (mu4 - s^4)/n with mu4 = 3k^2 + 6k
    const double var_se = std::sqrt((3 * 3.5 * 3.5 + 6 * 3.5 - 3.5 * 3.5) / v.size());
    CHECK(std::abs(testing::variance_of(v) - 3.5) < 3 * var_se);
  }
  SECTION("poisson with rate 4.2") {
    Substream rng(derive_key(43, 1));
    std::vector<double> v(100000);
    for (auto& x : v) x = static_cast<double>(sample_poisson(4.2, rng));
    CHECK(std::abs(testing::mean_of(v) - 4.2) < 3 * std::sqrt(4.2 / v.size()));
    // Poisson fourth central moment: lambda + 3 lambda^2
    const double var_se = std::sqrt((4.2 + 3 * 4.2 * 4.2 - 4.2 * 4.2) / v.size());
    CHECK(std::abs(testing::variance_of(v) - 4.2) < 3 * var_se);
  }
}

TEST_CASE("infection intensity") {
  CHECK(infection_intensity(0.0, 10.0, 0.0, 1.24, 0.97, 1e5, true) == 0.0);
  CHECK(infection_intensity(5000.0, 0.0, 0.0, 1.24, 0.97, 1e5, true) == 0.0);
  // 1.24 * 5000 * 10^0.97 / 1e5, with 10^0.97 = 9.33254300796991
  CHECK(infection_intensity(5000.0, 6.0, 4.0, 1.24, 0.97, 1e5, true) == Approx(0.578617666494134).epsilon(1e-12));
  CHECK(infection_intensity(5000.0, 6.0, 4.0, 1.24, 0.97, 1e5, false) == Approx(57861.7666494134).epsilon(1e-12));
}

namespace {

struct Toy {
  Demographics demo;
  DistanceMatrix dist;
  EpidemicState state;
};

Toy three_city_toy() {
  Toy t;
  t.demo = Demographics::constant({50000, 8000, 3000}, {60, 10, 4});
  t.dist = DistanceMatrix::planar({0, 30, 80}, {0, 40, 10});
  t.state.t = 1;
  t.state.susceptibles = {2500, 400, 150};
  t.state.infected = {40, 0, 3};
  return t;
}

}  // namespace

TEST_CASE("step without infection adds births only") {
  Toy t;
  t.demo = Demographics::constant({1000}, {12.5});
  t.dist = DistanceMatrix(1);
  t.state.susceptibles = {300};
  t.state.infected = {0};
  const auto r = step(t.state, GravityParams{}, LocalDynamics{}, t.demo, t.dist, SimulationOptions{});
  CHECK(r.state.infected[0] == 0);
  CHECK(r.state.susceptibles[0] == 312.5);
  CHECK(r.state.t == 2);

  t.demo.vaccination.cell(0, 0) = 1.0;
  const auto v = step(t.state, GravityParams{}, LocalDynamics{}, t.demo, t.dist, SimulationOptions{});
  CHECK(v.state.susceptibles[0] == 300.0);
}

TEST_CASE("step conserves S + I unless truncated") {
  auto toy = three_city_toy();
  SimulationOptions opt;
  opt.seed = 99;
  EpidemicState s = toy.state;
  for (int i = 0; i < 60; ++i) {
    const auto r = step(s, GravityParams{0.3, 1, 1, 1}, LocalDynamics{}, toy.demo, toy.dist, opt);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(r.state.susceptibles[k] >= 0.0);
      if (r.truncations == 0)
        CHECK(r.state.susceptibles[k] + r.state.infected[k] == Approx(s.susceptibles[k] + toy.demo.effective_births(k, s.t)));
    }
    s = r.state;
  }
}

TEST_CASE("truncation caps draws at the available susceptibles") {
  Toy t;
  t.demo = Demographics::constant({100}, {1.5});
  t.dist = DistanceMatrix(1);
  t.state.susceptibles = {10};
  t.state.infected = {5000};
  const auto r = step(t.state, GravityParams{}, LocalDynamics{}, t.demo, t.dist, SimulationOptions{7, false, {}});
  CHECK(r.truncations == 1);
  CHECK(r.state.infected[0] == 11);
  CHECK(r.state.susceptibles[0] == Approx(0.5));
}

TEST_CASE("simulation is deterministic and starts from the initial infecteds") {
  auto toy = three_city_toy();
  SimulationOptions opt;
  opt.seed = 2024;
  const GravityParams gp{0.4, 1, 1, 1};
  const auto a = simulate(toy.state, gp, LocalDynamics{}, toy.demo, toy.dist, 40, opt);
  const auto b = simulate(toy.state, gp, LocalDynamics{}, toy.demo, toy.dist, 40, opt);
  CHECK(a == b);
  CHECK(a.cities() == 3);
  CHECK(a.biweeks() == 40);
  for (std::size_t k = 0; k < 3; ++k) CHECK(a(k, 0) == toy.state.infected[k]);
  for (auto v : a.data()) CHECK(v >= 0);

  const auto one = simulate(toy.state, gp, LocalDynamics{}, toy.demo, toy.dist, 1, opt);
  for (std::size_t k = 0; k < 3; ++k) CHECK(one(k, 0) == toy.state.infected[k]);

  opt.seed = 2025;
  CHECK(simulate(toy.state, gp, LocalDynamics{}, toy.demo, toy.dist, 40, opt) != a);
}

TEST_CASE("uncoupled cities never catch the infection") {
  const auto demo = Demographics::constant({1e5, 2e4, 2e4, 5e3, 8e3}, {150, 30, 30, 8, 12});
  const auto dist = DistanceMatrix::planar({0, 10, 20, 30, 40}, {0, 0, 0, 0, 0});
  EpidemicState s;
  s.susceptibles = {4000, 900, 900, 300, 400};
  s.infected = {100, 0, 0, 0, 0};
  SimulationOptions opt;
  opt.seed = 5;
  const auto p = simulate(s, CouplingParams{0.0, 1, 1, 1}, LocalDynamics{}, demo, dist, 120, opt);
  for (std::size_t k = 1; k < 5; ++k)
    for (std::size_t t = 0; t < 120; ++t) CHECK(p(k, t) == 0);
}

TEST_CASE("decoupled system equals independent single-city runs") {
  const auto demo2 = Demographics::constant({2e5, 5e4}, {300, 70});
  const auto dist2 = DistanceMatrix::planar({0, 50}, {0, 0});
  EpidemicState s;
  s.susceptibles = {9000, 2500};
  s.infected = {200, 30};
  SimulationOptions opt;
  opt.seed = 77;
  const auto both = simulate_trajectory(s, CouplingParams{0.0, 1, 1, 1}, LocalDynamics{}, demo2, dist2, 200, opt);
  for (std::size_t k = 0; k < 2; ++k) {
    EpidemicState one;
    one.susceptibles = {s.susceptibles[k]};
    one.infected = {s.infected[k]};
    SimulationOptions o1 = opt;
    o1.stream_keys = {k};
    const auto demo1 = Demographics::constant({demo2.population.at(k, 1)}, {demo2.births.at(k, 1)});
    const auto single = simulate_trajectory(one, CouplingParams{0.0, 1, 1, 1}, LocalDynamics{}, demo1, DistanceMatrix(1), 200, o1);
    for (std::size_t t = 0; t < 200; ++t) {
      CHECK(single.panel(0, t) == both.panel(k, t));
      CHECK(single.susceptibles[t] == both.susceptibles[k * 200 + t]);
    }
  }
}

TEST_CASE("demographic and distance validation") {
  auto demo = Demographics::constant({10, 20}, {1, 2});
  CHECK_NOTHROW(demo.validate());
  demo.vaccination.cell(1, 0) = 1.5;
  CHECK_THROWS_AS(demo.validate(), DataError);
  auto d = DistanceMatrix::planar({0, 3}, {0, 4});
  CHECK(d(0, 1) == 5.0);
  CHECK_NOTHROW(d.validate());
  d(0, 1) = 6.0;
  CHECK_THROWS_AS(d.validate(), DataError);
  CHECK_THROWS_AS(simulate(EpidemicState{1, {1}, {1}}, GravityParams{}, LocalDynamics{}, demo, d, 0, {}), DataError);
}

TEST_CASE("initial susceptibles use the configured fraction") {
  const auto demo = Demographics::constant({1000, 333}, {1, 1});
  const auto s = initial_susceptibles(demo, 0.05);
  CHECK(s[0] == 50.0);
  CHECK(s[1] == 17.0);
}
