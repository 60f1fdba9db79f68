#pragma once

// CSV ingestion of city tables, case panels, vaccination coverage, biweek
// masks and distance files, plus the standard data corrections.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gravem/design.hpp"
#include "gravem/error.hpp"
#include "gravem/model.hpp"

namespace gravem {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Minimal CSV reader: comma separated, no quoting, '#' lines and blank lines skipped.
class CsvReader {
public:
  explicit CsvReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw DataError("cannot open " + path);
    if (!next_row(header_)) throw DataError(path + ": empty file");
  }

  const std::vector<std::string>& header() const { return header_; }
  const std::string& path() const { return path_; }
  std::size_t line() const { return line_; }

  std::optional<std::size_t> column(const std::string& name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
      if (header_[i] == name) return i;
    return std::nullopt;
  }
  std::size_t require_column(const std::string& name) const {
    auto c = column(name);
    if (!c) throw DataError(path_ + ": missing column '" + name + "'");
    return *c;
  }

  bool next_row(std::vector<std::string>& row) {
    std::string l;
    while (std::getline(in_, l)) {
      ++line_;
      l = trim(l);
      if (l.empty() || l[0] == '#') continue;
      row = split(l, ',');
      for (auto& f : row) f = trim(f);
      if (!header_.empty() && row.size() != header_.size())
        throw DataError(where() + ": expected " + std::to_string(header_.size()) + " fields, found " + std::to_string(row.size()));
      return true;
    }
    return false;
  }

  std::string where(std::size_t col = static_cast<std::size_t>(-1)) const {
    std::string w = path_ + " line " + std::to_string(line_);
    if (col < header_.size()) w += " column '" + header_[col] + "'";
    return w;
  }

  double number(const std::vector<std::string>& row, std::size_t col) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(row[col], &used);
      if (used != row[col].size() || !std::isfinite(v)) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw DataError(where(col) + ": '" + row[col] + "' is not a number");
    }
  }

  long long integer(const std::vector<std::string>& row, std::size_t col) const {
    const double v = number(row, col);
    if (v != std::floor(v) || std::abs(v) > 9e15) throw DataError(where(col) + ": '" + row[col] + "' is not an integer");
    return static_cast<long long>(v);
  }

private:
  std::string path_;
  std::ifstream in_;
  std::vector<std::string> header_;
  std::size_t line_ = 0;
};

}  // namespace detail

struct CityRecord {
  std::string id;
  std::string name;
  double x = 0.0, y = 0.0;  // km, or lon/lat in degrees
  double population = 0.0;
  double births = 0.0;  // per biweek
};

inline std::vector<CityRecord> load_cities(const std::string& path) {
  detail::CsvReader csv(path);
  const auto c_id = csv.require_column("city_id"), c_name = csv.require_column("name"), c_x = csv.require_column("x_km"),
             c_y = csv.require_column("y_km"), c_pop = csv.require_column("population"),
             c_b = csv.require_column("births_per_biweek");
  std::vector<CityRecord> out;
  std::vector<std::string> row;
  std::unordered_map<std::string, std::size_t> seen;
  while (csv.next_row(row)) {
    CityRecord r{row[c_id], row[c_name], csv.number(row, c_x), csv.number(row, c_y), csv.number(row, c_pop), csv.number(row, c_b)};
    if (r.id.empty()) throw DataError(csv.where(c_id) + ": empty city id");
    if (!seen.emplace(r.id, out.size()).second) throw DataError(csv.where(c_id) + ": duplicate city '" + r.id + "'");
    if (!(r.population > 0.0)) throw DataError(csv.where(c_pop) + ": population must be positive");
    if (r.births < 0.0) throw DataError(csv.where(c_b) + ": births must be nonnegative");
    out.push_back(std::move(r));
  }
  if (out.empty()) throw DataError(path + ": no cities");
  return out;
}

struct CaseOptions {
  /// Counts are weekly; consecutive pairs (2b-1, 2b) are summed into biweek b.
  bool weekly = false;
};

namespace detail {

inline std::unordered_map<std::string, std::size_t> index_ids(const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> m;
  for (std::size_t i = 0; i < ids.size(); ++i) m.emplace(ids[i], i);
  return m;
}

/// Sums weekly columns pairwise; weeks must start on an odd index and come in full pairs.
inline EpidemicPanel aggregate_weeks(const EpidemicPanel& weekly, const std::string& path) {
  if (weekly.first_biweek() % 2 != 1 && weekly.first_biweek() % 2 != -1)
    throw DataError(path + ": weekly series must start on an odd week so weeks pair as (2b-1, 2b)");
  if (weekly.biweeks() % 2 != 0)
    throw DataError(path + ": odd trailing week " + std::to_string(weekly.biweek_label(weekly.biweeks() - 1)) +
                    " cannot be paired into a biweek");
  EpidemicPanel out(weekly.city_ids(), weekly.biweeks() / 2, (weekly.first_biweek() + 1) / 2);
  for (std::size_t k = 0; k < weekly.cities(); ++k)
    for (std::size_t b = 0; b < out.biweeks(); ++b) out(k, b) = weekly(k, 2 * b) + weekly(k, 2 * b + 1);
  return out;
}

}  // namespace detail

/// Reads a long (city_id,biweek_index,cases) or wide (biweek_index,<city>...)
/// case file into a panel ordered like `city_ids`. With weekly input the index
/// column is week_index.
inline EpidemicPanel load_cases(const std::string& path, const std::vector<std::string>& city_ids, const CaseOptions& opt = {}) {
  detail::CsvReader csv(path);
  const std::string index_name = opt.weekly ? "week_index" : "biweek_index";
  const auto index = detail::index_ids(city_ids);
  const std::size_t K = city_ids.size();
  std::map<long long, std::vector<std::optional<std::int64_t>>> rows;
  auto cell = [&](long long t) -> std::vector<std::optional<std::int64_t>>& {
    auto it = rows.find(t);
    if (it == rows.end()) it = rows.emplace(t, std::vector<std::optional<std::int64_t>>(K)).first;
    return it->second;
  };
  auto check_count = [&](long long v, std::size_t col) {
    if (v < 0) throw DataError(csv.where(col) + ": negative case count");
    return static_cast<std::int64_t>(v);
  };
  std::vector<std::string> row;
  if (csv.column("city_id") && csv.column("cases")) {
    const auto c_id = csv.require_column("city_id"), c_t = csv.require_column(index_name), c_n = csv.require_column("cases");
    while (csv.next_row(row)) {
      auto it = index.find(row[c_id]);
      if (it == index.end()) throw DataError(csv.where(c_id) + ": unknown city '" + row[c_id] + "'");
      const long long t = csv.integer(row, c_t);
      auto& slot = cell(t)[it->second];
      if (slot) throw DataError(csv.where(c_t) + ": duplicate entry for city '" + row[c_id] + "'");
      slot = check_count(csv.integer(row, c_n), c_n);
    }
  } else {
    const auto c_t = csv.require_column(index_name);
    std::vector<std::optional<std::size_t>> city_of(csv.header().size());
    for (std::size_t c = 0; c < csv.header().size(); ++c) {
      if (c == c_t) continue;
      auto it = index.find(csv.header()[c]);
      if (it == index.end()) throw DataError(path + ": unknown city column '" + csv.header()[c] + "'");
      city_of[c] = it->second;
    }
    while (csv.next_row(row)) {
      const long long t = csv.integer(row, c_t);
      auto& r = cell(t);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (!city_of[c]) continue;
        if (r[*city_of[c]]) throw DataError(csv.where(c_t) + ": duplicate time index " + std::to_string(t));
        r[*city_of[c]] = check_count(csv.integer(row, c), c);
      }
    }
  }
  if (rows.empty()) throw DataError(path + ": no case records");
  const long long first = rows.begin()->first, last = rows.rbegin()->first;
  if (static_cast<std::size_t>(last - first + 1) != rows.size())
    throw DataError(path + ": time indices are not contiguous between " + std::to_string(first) + " and " + std::to_string(last));
  EpidemicPanel panel(city_ids, rows.size(), first);
  std::size_t j = 0;
  for (const auto& [t, r] : rows) {
    for (std::size_t k = 0; k < K; ++k) {
      if (!r[k]) throw DataError(path + ": no count for city '" + city_ids[k] + "' at index " + std::to_string(t));
      panel(k, j) = *r[k];
    }
    ++j;
  }
  return opt.weekly ? detail::aggregate_weeks(panel, path) : panel;
}

/// Long-form panel: city_id,biweek_index,cases.
inline void write_panel_csv(std::ostream& out, const EpidemicPanel& p) {
  out << "city_id,biweek_index,cases\n";
  for (std::size_t k = 0; k < p.cities(); ++k)
    for (std::size_t j = 0; j < p.biweeks(); ++j) out << p.city_ids()[k] << ',' << p.biweek_label(j) << ',' << p(k, j) << '\n';
}

/// Coverage per city and biweek (columns 1..last_biweek); unlisted entries are 0.
inline CityTable load_vaccination(const std::string& path, const std::vector<std::string>& city_ids, long long last_biweek) {
  detail::CsvReader csv(path);
  const auto c_id = csv.require_column("city_id"), c_t = csv.require_column("biweek_index"), c_v = csv.require_column("coverage");
  const auto index = detail::index_ids(city_ids);
  CityTable table(city_ids.size(), static_cast<std::size_t>(std::max<long long>(1, last_biweek)), 0.0);
  std::vector<std::string> row;
  while (csv.next_row(row)) {
    auto it = index.find(row[c_id]);
    if (it == index.end()) throw DataError(csv.where(c_id) + ": unknown city '" + row[c_id] + "'");
    const long long t = csv.integer(row, c_t);
    const double v = csv.number(row, c_v);
    if (v < 0.0 || v > 1.0) throw DataError(csv.where(c_v) + ": coverage must lie in [0,1]");
    if (t < 1) throw DataError(csv.where(c_t) + ": biweek index must be >= 1");
    if (t > last_biweek) continue;
    table.cell(it->second, static_cast<std::size_t>(t - 1)) = v;
  }
  return table;
}

/// biweek_index,label rows.
inline std::map<long long, std::string> load_mask(const std::string& path) {
  detail::CsvReader csv(path);
  const auto c_t = csv.require_column("biweek_index"), c_l = csv.require_column("label");
  std::map<long long, std::string> mask;
  std::vector<std::string> row;
  while (csv.next_row(row)) {
    const long long t = csv.integer(row, c_t);
    if (!mask.emplace(t, row[c_l]).second) throw DataError(csv.where(c_t) + ": duplicate biweek");
  }
  return mask;
}

/// Selection vector over a panel's columns for biweeks carrying `label`.
inline std::vector<bool> mask_columns(const std::map<long long, std::string>& mask, const EpidemicPanel& panel,
                                      const std::string& label) {
  std::vector<bool> sel(panel.biweeks(), false);
  for (std::size_t j = 0; j < panel.biweeks(); ++j) {
    auto it = mask.find(panel.biweek_label(j));
    sel[j] = it != mask.end() && it->second == label;
  }
  return sel;
}

/// city_a,city_b,distance_km rows; each unordered pair once (or both ways, consistently).
inline DistanceMatrix load_distances(const std::string& path, const std::vector<std::string>& city_ids) {
  detail::CsvReader csv(path);
  const auto c_a = csv.require_column("city_a"), c_b = csv.require_column("city_b"), c_d = csv.require_column("distance_km");
  const auto index = detail::index_ids(city_ids);
  const std::size_t K = city_ids.size();
  DistanceMatrix d(K);
  std::vector<bool> set(K * K, false);
  std::vector<std::string> row;
  while (csv.next_row(row)) {
    auto a = index.find(row[c_a]), b = index.find(row[c_b]);
    if (a == index.end()) throw DataError(csv.where(c_a) + ": unknown city '" + row[c_a] + "'");
    if (b == index.end()) throw DataError(csv.where(c_b) + ": unknown city '" + row[c_b] + "'");
    const double v = csv.number(row, c_d);
    const std::size_t i = a->second, j = b->second;
    if (i == j) throw DataError(csv.where(c_b) + ": self distance");
    if (!(v > 0.0)) throw DataError(csv.where(c_d) + ": distance must be positive");
    if (set[i * K + j] && d(i, j) != v) throw DataError(csv.where(c_d) + ": conflicting distance");
    d(i, j) = d(j, i) = v;
    set[i * K + j] = set[j * K + i] = true;
  }
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j)
      if (i != j && !set[i * K + j]) throw DataError(path + ": missing distance between '" + city_ids[i] + "' and '" + city_ids[j] + "'");
  return d;
}

// ---------------------------------------------------------------------------
// Corrections

/// Each count becomes round(count / rate).
inline EpidemicPanel correct_underreporting(const EpidemicPanel& panel, double rate = 0.52) {
  if (!(rate > 0.0 && rate <= 1.0)) throw DataError("reporting rate must lie in (0, 1]");
  EpidemicPanel out = panel;
  for (std::size_t k = 0; k < panel.cities(); ++k)
    for (std::size_t j = 0; j < panel.biweeks(); ++j)
      out(k, j) = static_cast<std::int64_t>(std::llround(static_cast<double>(panel(k, j)) / rate));
  return out;
}

inline double adjust_births_for_vaccination(double births, double coverage) {
  if (!(coverage >= 0.0 && coverage <= 1.0)) throw DataError("vaccination coverage must lie in [0,1]");
  return births * (1.0 - coverage);
}

// ---------------------------------------------------------------------------
// Whole data set

struct DataPaths {
  std::string cities, cases, vaccination, distances;
  bool latlon = false;
  bool weekly = false;
};

struct Dataset {
  std::vector<CityRecord> cities;
  EpidemicPanel panel;
  Demographics demographics;
  DistanceMatrix distances;

  std::vector<std::string> city_ids() const {
    std::vector<std::string> ids;
    for (const auto& c : cities) ids.push_back(c.id);
    return ids;
  }
};

inline Dataset load_panel(const DataPaths& paths) {
  Dataset ds;
  ds.cities = load_cities(paths.cities);
  const auto ids = ds.city_ids();
  ds.panel = load_cases(paths.cases, ids, {paths.weekly});
  std::vector<double> pop, births, x, y;
  for (const auto& c : ds.cities) {
    pop.push_back(c.population);
    births.push_back(c.births);
    x.push_back(c.x);
    y.push_back(c.y);
  }
  ds.demographics = Demographics::constant(pop, births);
  if (!paths.vaccination.empty()) {
    const long long last = ds.panel.biweek_label(ds.panel.biweeks() - 1);
    ds.demographics.vaccination = load_vaccination(paths.vaccination, ids, last);
  }
  if (!paths.distances.empty()) ds.distances = load_distances(paths.distances, ids);
  else if (paths.latlon) ds.distances = DistanceMatrix::great_circle(x, y);
  else ds.distances = DistanceMatrix::planar(x, y);
  ds.demographics.validate();
  ds.distances.validate();
  return ds;
}

inline void write_cities_csv(std::ostream& out, const std::vector<CityRecord>& cities) {
  out << "city_id,name,x_km,y_km,population,births_per_biweek\n";
  for (const auto& c : cities)
    out << c.id << ',' << c.name << ',' << format_double(c.x) << ',' << format_double(c.y) << ',' << format_double(c.population)
        << ',' << format_double(c.births) << '\n';
}

}  // namespace gravem
