#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepsd/grid.hpp"
#include "deepsd/series.hpp"

namespace deepsd {

/// Percentile with linear interpolation between order statistics
/// (position (n-1)*p/100), p in [0, 100].
double percentile(std::span<const double> values, double p);

/// Normalised histogram on edges lo, lo + w, ..., lo + bins*w. Values past
/// the last edge land in the last bin.
struct Histogram {
  double lo = 0.0;
  double bin_width = 1.0;
  std::vector<double> masses;
};

Histogram make_histogram(std::span<const double> values, double lo, double bin_width,
                         std::size_t bins);

/// Sum over shared bins of min(Z_obs, Z_pred). Bins start at min(0, data
/// minimum) and extend to the joint maximum.
double perkins_skill(std::span<const double> obs, std::span<const double> pred,
                     double bin_width = 1.0);

struct LocationMetrics {
  double bias = 0.0;
  std::optional<double> corr;  // empty when either series is constant
  double rmse = 0.0;
  double skill = 0.0;
  std::size_t samples = 0;
};

std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

LocationMetrics location_metrics(std::span<const double> obs, std::span<const double> pred,
                                 double bin_width = 1.0);

/// Spatial mean and 25th/75th percentiles of one metric across locations.
struct MetricSummary {
  double mean = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  std::size_t count = 0;  // locations contributing
};

struct EvalReport {
  std::string scope;  // "all", "season" or "percentile"
  std::string key;    // "", DJF/MAM/JJA/SON, or the threshold
  bool omitted = false;
  std::string note;
  std::size_t days = 0;       // days in scope (season reports)
  std::size_t events = 0;     // selected days summed over locations (percentile reports)
  std::size_t dropped = 0;    // locations excluded from the aggregate
  MetricSummary bias, corr, rmse, skill;
  std::vector<LocationMetrics> per_location;
};

/// Series per location: values[location][day].
using LocationSeries = std::vector<std::vector<double>>;

struct CellIndex {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const CellIndex&) const = default;
};

/// Aggregates per-location metrics (mean, q25, q75). Undefined correlations
/// are skipped for the corr summary.
EvalReport aggregate(std::string scope, std::string key, std::vector<LocationMetrics> per_location);

EvalReport overall_report(const LocationSeries& obs, const LocationSeries& pred,
                          double bin_width = 1.0);

enum class Season { kDJF, kMAM, kJJA, kSON };
Season season_of(Date d);
const char* season_name(Season s);

/// One report per season in DJF, MAM, JJA, SON order; seasons without days
/// come back with `omitted = true`.
std::vector<EvalReport> seasonal_report(const LocationSeries& obs, const LocationSeries& pred,
                                        const std::vector<Date>& dates, double bin_width = 1.0);

inline const std::vector<double> kDefaultThresholds = {90.0, 95.0, 97.5, 99.0, 99.5, 99.9};

/// For each threshold p and location, selects days where obs exceeds the
/// location's observed p-th percentile and scores that subset. Locations with
/// fewer than `min_events` selected days are dropped from the aggregate.
/// Throws DataError when a threshold selects no day anywhere.
std::vector<EvalReport> extreme_sweep(const LocationSeries& obs, const LocationSeries& pred,
                                      const std::vector<double>& thresholds = kDefaultThresholds,
                                      std::size_t min_events = 20, double bin_width = 1.0);

/// Series at the given cells, one vector per cell.
LocationSeries extract_locations(const GridSeries& series, const std::vector<CellIndex>& cells);

/// `count` distinct cells drawn uniformly without replacement, seeded.
std::vector<CellIndex> sample_locations(std::size_t rows, std::size_t cols, std::size_t count,
                                        std::uint64_t seed);

/// Location list: one "row col" pair per line, '#' comments allowed.
std::vector<CellIndex> read_locations(const std::filesystem::path& path);
void write_locations(const std::vector<CellIndex>& cells, const std::filesystem::path& path);

/// Per-cell RMSE over all days.
GeoGrid rmse_map(const GridSeries& obs, const GridSeries& pred);

/// CSV with columns scope, season_or_threshold, bias, corr, rmse, skill,
/// q25_bias, q25_corr, q25_rmse, q25_skill, q75_bias, q75_corr, q75_rmse,
/// q75_skill. Omitted reports and undefined values are written as "NA".
void write_report_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path);
std::string report_csv(const std::vector<EvalReport>& reports);

}  // namespace deepsd
