#pragma once

// Per-city summary statistics of an epidemic panel and the Euclidean distance
// between summary vectors.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gravem/error.hpp"
#include "gravem/hash.hpp"
#include "gravem/model.hpp"

namespace gravem {

enum class SummaryKind { max_incidence, zero_proportion };

inline const char* to_string(SummaryKind k) {
  return k == SummaryKind::max_incidence ? "max-incidence" : "zero-proportion";
}

inline SummaryKind summary_kind_from_string(const std::string& s) {
  if (s == "max-incidence" || s == "M") return SummaryKind::max_incidence;
  if (s == "zero-proportion" || s == "P") return SummaryKind::zero_proportion;
  throw DataError("unknown summary statistic '" + s + "'");
}

struct SummaryVector {
  SummaryKind kind = SummaryKind::zero_proportion;
  std::vector<std::string> city_ids;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }

  /// Hash over kind, city ordering and the exact values.
  std::uint64_t content_hash() const {
    std::uint64_t h = fnv1a(to_string(kind));
    for (std::size_t i = 0; i < values.size(); ++i) {
      h = fnv1a(city_ids[i], h);
      h = fnv1a(format_double(values[i]), h);
    }
    return h;
  }

  friend bool operator==(const SummaryVector&, const SummaryVector&) = default;
};

/// M_i = max_t panel[i, t].
inline SummaryVector max_incidence(const EpidemicPanel& panel) {
  if (panel.empty()) throw DataError("summary of an empty panel");
  SummaryVector s{SummaryKind::max_incidence, panel.city_ids(), std::vector<double>(panel.cities(), 0.0)};
  for (std::size_t k = 0; k < panel.cities(); ++k) {
    std::int64_t m = panel(k, 0);
    for (std::size_t t = 1; t < panel.biweeks(); ++t) m = std::max(m, panel(k, t));
    s.values[k] = static_cast<double>(m);
  }
  return s;
}

/// P_i = #{t : panel[i, t] = 0} / T.
inline SummaryVector zero_proportion(const EpidemicPanel& panel) {
  if (panel.empty()) throw DataError("summary of an empty panel");
  SummaryVector s{SummaryKind::zero_proportion, panel.city_ids(), std::vector<double>(panel.cities(), 0.0)};
  const double T = static_cast<double>(panel.biweeks());
  for (std::size_t k = 0; k < panel.cities(); ++k) {
    std::size_t zeros = 0;
    for (std::size_t t = 0; t < panel.biweeks(); ++t) zeros += panel(k, t) == 0;
    s.values[k] = static_cast<double>(zeros) / T;
  }
  return s;
}

inline SummaryVector summarize(const EpidemicPanel& panel, SummaryKind kind) {
  return kind == SummaryKind::max_incidence ? max_incidence(panel) : zero_proportion(panel);
}

/// Euclidean distance between two summaries of the same kind and city order.
inline double summary_distance(const SummaryVector& a, const SummaryVector& b) {
  if (a.kind != b.kind) throw DataError("summary kinds differ: " + std::string(to_string(a.kind)) + " vs " + to_string(b.kind));
  if (a.size() != b.size()) throw DataError("summary vectors differ in length");
  if (!a.city_ids.empty() && !b.city_ids.empty() && a.city_ids != b.city_ids)
    throw DataError("summary vectors use different city orderings");
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    ss += d * d;
  }
  return std::sqrt(ss);
}

inline void write_summary_csv(std::ostream& out, const SummaryVector& s) {
  out << "# kind=" << to_string(s.kind) << "\n";
  out << "city_id,value\n";
  for (std::size_t i = 0; i < s.size(); ++i) out << s.city_ids[i] << ',' << format_double(s.values[i]) << '\n';
}

inline SummaryVector read_summary_csv(std::istream& in) {
  std::string line;
  SummaryVector s;
  bool have_kind = false, have_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# kind=", 0) == 0) {
      s.kind = summary_kind_from_string(line.substr(7));
      have_kind = true;
      continue;
    }
    if (line[0] == '#') continue;
    if (!have_header) {
      if (line != "city_id,value") throw DataError("summary csv line " + std::to_string(lineno) + ": expected header city_id,value");
      have_header = true;
      continue;
    }
    auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("summary csv line " + std::to_string(lineno) + ": expected two fields");
    s.city_ids.push_back(line.substr(0, comma));
    try {
      s.values.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw DataError("summary csv line " + std::to_string(lineno) + ": bad value");
    }
  }
  if (!have_kind) throw DataError("summary csv is missing its '# kind=' line");
  return s;
}

}  // namespace gravem
