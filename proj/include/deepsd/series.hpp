#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "deepsd/grid.hpp"

namespace deepsd {

using Date = std::chrono::year_month_day;

/// Consecutive calendar days starting at `start`.
std::vector<Date> consecutive_dates(Date start, std::size_t count);
Date parse_date(const std::string& iso);  // "YYYY-MM-DD"
std::string format_date(Date d);
unsigned month_of(Date d);

/// A day-indexed sequence of rasters of one variable on one lattice.
struct GridSeries {
  std::vector<GeoGrid> days;
  std::vector<Date> dates;
  std::string variable = "precip";
  std::string units = "mm/day";

  std::size_t size() const noexcept { return days.size(); }
  bool empty() const noexcept { return days.empty(); }

  /// Throws DataError if dates are misaligned or lattices differ.
  void validate() const;

  /// Days [first, first + count).
  GridSeries slice(std::size_t first, std::size_t count) const;
};

/// On-disk layout: `<dir>/manifest.json` plus `<dir>/<variable>_<NNNNN>.grd`
/// for each day. The manifest records day count, variable, units, the first
/// date and the file name pattern.
void write_series(const GridSeries& series, const std::filesystem::path& dir);
GridSeries read_series(const std::filesystem::path& dir);

std::string series_day_filename(const std::string& variable, std::size_t day);

/// Applies `fn` to each day, optionally across `threads` workers. Results keep
/// day order regardless of thread count.
GridSeries map_series(const GridSeries& in, const std::function<GeoGrid(const GeoGrid&, std::size_t)>& fn,
                      unsigned threads = 1);

}  // namespace deepsd
