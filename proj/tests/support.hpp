#pragma once

#include <filesystem>
#include <string>
#include <unistd.h>

#include "deepsd/grid.hpp"
#include "deepsd/random.hpp"
#include "deepsd/series.hpp"

namespace deepsd::test {

inline GeoGrid random_grid(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = 0.0,
                           double hi = 1.0, GeoRef ref = {40.0, -100.0, 0.125, 0.125}) {
  Rng rng(seed, 77);
  GeoGrid g(rows, cols, ref);
  for (double& v : g.values()) v = lo + (hi - lo) * rng.uniform();
  return g;
}

/// Series of `days` random grids with consecutive dates from `start`.
inline GridSeries random_series(std::size_t days, std::size_t rows, std::size_t cols, std::uint64_t seed,
                                Date start = std::chrono::year{2001} / 1 / 1, double hi = 10.0) {
  GridSeries s;
  s.dates = consecutive_dates(start, days);
  for (std::size_t d = 0; d < days; ++d) s.days.push_back(random_grid(rows, cols, seed * 1000 + d, 0.0, hi));
  return s;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() /
              ("deepsd_" + name + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace deepsd::test
