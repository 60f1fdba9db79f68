#pragma once

// Small helpers shared by the unit tests.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gravem/model.hpp"
#include "gravem/rng.hpp"

namespace testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gravem_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string write_text(const std::filesystem::path& p, const std::string& body) {
  std::ofstream(p) << body;
  return p.string();
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

/// Random panel with a mix of zeros and counts.
inline gravem::EpidemicPanel random_panel(std::size_t K, std::size_t T, std::uint64_t seed, double zero_prob = 0.4) {
  gravem::Substream rng(gravem::derive_key(seed, 0x7465737450ULL));
  auto p = gravem::EpidemicPanel::with_default_ids(K, T);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t t = 0; t < T; ++t)
      p(k, t) = rng.uniform() < zero_prob ? 0 : static_cast<std::int64_t>(rng() % 500);
  return p;
}

}  // namespace testing
