#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "gravem/io.hpp"
#include "support.hpp"

using namespace gravem;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

const char* kCities =
    "city_id,name,x_km,y_km,population,births_per_biweek\n"
    "# two towns\n"
    "A,Alpha,0,0,10000,12.5\n"
    "B,Beta,3,4,2500,3\n";

}  // namespace

TEST_CASE("two city toy panel loads") {
  const auto dir = testing::scratch_dir("io_toy");
  DataPaths paths;
  paths.cities = testing::write_text(dir / "cities.csv", kCities);
  paths.cases = testing::write_text(dir / "cases.csv",
                                    "city_id,biweek_index,cases\n"
                                    "A,1,5\nA,2,0\nA,3,7\nA,4,1\n"
                                    "B,4,2\nB,3,0\nB,2,0\nB,1,9\n");
  const auto ds = load_panel(paths);
  CHECK(ds.city_ids() == std::vector<std::string>{"A", "B"});
  REQUIRE(ds.panel.biweeks() == 4);
  CHECK(ds.panel.first_biweek() == 1);
  CHECK(ds.panel(0, 2) == 7);
  CHECK(ds.panel(1, 0) == 9);
  CHECK(ds.distances(0, 1) == 5.0);
  CHECK(ds.demographics.population.at(1, 3) == 2500);
  CHECK(ds.demographics.effective_births(0, 2) == 12.5);

  std::stringstream out;
  write_panel_csv(out, ds.panel);
  const auto again = testing::write_text(dir / "again.csv", out.str());
  CHECK(load_cases(again, ds.city_ids()) == ds.panel);

  std::stringstream cities;
  write_cities_csv(cities, ds.cities);
  const auto cpath = testing::write_text(dir / "cities2.csv", cities.str());
  const auto back = load_cities(cpath);
  REQUIRE(back.size() == 2);
  CHECK(back[1].name == "Beta");
  CHECK(back[0].births == 12.5);
}

TEST_CASE("wide and weekly case files") {
  const auto dir = testing::scratch_dir("io_weekly");
  const std::vector<std::string> ids{"A", "B"};
  const auto wide = testing::write_text(dir / "wide.csv", "biweek_index,B,A\n3,1,2\n4,5,6\n");
  const auto p = load_cases(wide, ids);
  CHECK(p.first_biweek() == 3);
  CHECK(p(0, 1) == 6);
  CHECK(p(1, 0) == 1);

  const auto weekly = testing::write_text(dir / "weekly.csv", "week_index,A,B\n1,1,0\n2,2,0\n3,4,1\n4,8,1\n");
  const auto w = load_cases(weekly, ids, {.weekly = true});
  REQUIRE(w.biweeks() == 2);
  CHECK(w.first_biweek() == 1);
  CHECK(w(0, 0) == 3);
  CHECK(w(0, 1) == 12);
  CHECK(w(1, 1) == 2);

  const auto odd = testing::write_text(dir / "odd.csv", "week_index,A,B\n1,1,0\n2,2,0\n3,4,1\n");
  CHECK_THROWS_WITH(load_cases(odd, ids, {.weekly = true}), ContainsSubstring("odd trailing week"));
  const auto even_start = testing::write_text(dir / "even.csv", "week_index,A,B\n2,1,0\n3,2,0\n");
  CHECK_THROWS_AS(load_cases(even_start, ids, {.weekly = true}), DataError);
}

TEST_CASE("schema errors name their location") {
  const auto dir = testing::scratch_dir("io_errors");
  const std::vector<std::string> ids{"A", "B"};
  auto cases = [&](const std::string& body) { return testing::write_text(dir / "c.csv", body); };
  CHECK_THROWS_WITH(load_cases(cases("city_id,biweek_index,cases\nA,1,5\nB,1,x\n"), ids),
                    ContainsSubstring("line 3") && ContainsSubstring("'cases'"));
  CHECK_THROWS_WITH(load_cases(cases("city_id,biweek_index,cases\nA,1,-5\nB,1,1\n"), ids), ContainsSubstring("negative"));
  CHECK_THROWS_WITH(load_cases(cases("city_id,biweek_index,cases\nA,1,5\nC,1,1\n"), ids), ContainsSubstring("unknown city 'C'"));
  CHECK_THROWS_WITH(load_cases(cases("city_id,biweek_index,cases\nA,1,5\n"), ids), ContainsSubstring("no count for city 'B'"));
  CHECK_THROWS_WITH(load_cases(cases("city_id,biweek_index,cases\nA,1,1\nB,1,1\nA,3,1\nB,3,1\n"), ids),
                    ContainsSubstring("not contiguous"));
  CHECK_THROWS_WITH(load_cases(cases("city_id,biweek_index,cases\nA,1,1\nA,1,2\n"), ids), ContainsSubstring("duplicate"));
  CHECK_THROWS_WITH(load_cases(cases("city_id,biweek_index,cases\nA,1\n"), ids), ContainsSubstring("expected 3 fields"));
  CHECK_THROWS_AS(load_cases((dir / "missing.csv").string(), ids), DataError);

  CHECK_THROWS_WITH(load_cities(testing::write_text(dir / "x.csv", "city_id,name,x_km,y_km,population\nA,a,0,0,1\n")),
                    ContainsSubstring("births_per_biweek"));
  CHECK_THROWS_WITH(
      load_cities(testing::write_text(dir / "y.csv", "city_id,name,x_km,y_km,population,births_per_biweek\nA,a,0,0,1,1\nA,b,1,1,1,1\n")),
      ContainsSubstring("duplicate city"));
  CHECK_THROWS_AS(
      load_cities(testing::write_text(dir / "z.csv", "city_id,name,x_km,y_km,population,births_per_biweek\nA,a,0,0,0,1\n")),
      DataError);
}

TEST_CASE("distance files") {
  const auto dir = testing::scratch_dir("io_dist");
  const std::vector<std::string> ids{"A", "B", "C"};
  const auto ok = testing::write_text(dir / "d.csv", "city_a,city_b,distance_km\nA,B,3\nB,C,4\nA,C,5\n");
  const auto d = load_distances(ok, ids);
  CHECK(d(1, 0) == 3.0);
  CHECK(d(2, 1) == 4.0);
  CHECK(d(0, 2) == 5.0);
  CHECK_THROWS_WITH(load_distances(testing::write_text(dir / "e.csv", "city_a,city_b,distance_km\nA,B,3\nB,C,4\n"), ids),
                    ContainsSubstring("missing distance"));
  CHECK_THROWS_AS(load_distances(testing::write_text(dir / "f.csv", "city_a,city_b,distance_km\nA,B,3\nB,A,3.5\nB,C,4\nA,C,5\n"), ids),
                  DataError);
  CHECK_THROWS_AS(load_distances(testing::write_text(dir / "g.csv", "city_a,city_b,distance_km\nA,B,0\nB,C,4\nA,C,5\n"), ids),
                  DataError);

  const auto gc = DistanceMatrix::great_circle({0, 0}, {0, 1});
  CHECK(gc(0, 1) == Approx(6371.0 * std::numbers::pi / 180.0).epsilon(1e-12));
}

TEST_CASE("underreporting and vaccination corrections") {
  auto p = EpidemicPanel::with_default_ids(1, 3);
  p(0, 0) = 52;
  p(0, 1) = 0;
  p(0, 2) = 13;
  const auto c = correct_underreporting(p, 0.52);
  CHECK(c(0, 0) == 100);
  CHECK(c(0, 1) == 0);
  CHECK(c(0, 2) == 25);
  CHECK(correct_underreporting(p, 1.0) == p);
  CHECK_THROWS_AS(correct_underreporting(p, 0.0), DataError);

  CHECK(adjust_births_for_vaccination(200, 0.6) == Approx(80));
  CHECK(adjust_births_for_vaccination(200, 0.0) == 200);
  CHECK(adjust_births_for_vaccination(200, 1.0) == 0);
  CHECK_THROWS_AS(adjust_births_for_vaccination(200, 1.1), DataError);
}

TEST_CASE("vaccination and mask files") {
  const auto dir = testing::scratch_dir("io_vacc");
  const std::vector<std::string> ids{"A", "B"};
  const auto v = load_vaccination(testing::write_text(dir / "v.csv", "city_id,biweek_index,coverage\nA,2,0.6\nB,3,1\nB,9,0.5\n"),
                                  ids, 4);
  CHECK(v.at(0, 2) == 0.6);
  CHECK(v.at(0, 1) == 0.0);
  CHECK(v.at(1, 3) == 1.0);
  CHECK_THROWS_AS(load_vaccination(testing::write_text(dir / "w.csv", "city_id,biweek_index,coverage\nA,2,1.6\n"), ids, 4),
                  DataError);

  DataPaths paths;
  paths.cities = testing::write_text(dir / "cities.csv", kCities);
  paths.cases = testing::write_text(dir / "cases.csv", "biweek_index,A,B\n1,1,1\n2,1,1\n");
  paths.vaccination = testing::write_text(dir / "vacc.csv", "city_id,biweek_index,coverage\nA,2,0.6\n");
  const auto ds = load_panel(paths);
  CHECK(ds.demographics.effective_births(0, 2) == Approx(12.5 * 0.4));
  CHECK(ds.demographics.effective_births(0, 1) == 12.5);

  const auto mask = load_mask(testing::write_text(dir / "m.csv", "biweek_index,label\n1,holiday\n2,term\n"));
  CHECK(mask_columns(mask, ds.panel, "holiday") == std::vector<bool>{true, false});
  CHECK(mask_columns(mask, ds.panel, "other") == std::vector<bool>{false, false});
  CHECK_THROWS_AS(load_mask(testing::write_text(dir / "n.csv", "biweek_index,label\n1,a\n1,b\n")), DataError);
}
