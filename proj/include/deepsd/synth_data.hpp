#pragma once

#include <cstdint>
#include <utility>

#include "deepsd/grid.hpp"
#include "deepsd/series.hpp"

namespace deepsd {

struct SynthConfig {
  std::size_t rows = 208;
  std::size_t cols = 464;
  std::size_t days = 365;
  std::uint64_t seed = 0;
  double rain_fraction = 0.3;       // target fraction of wet cells
  double coupling = 1.0;            // orographic multiplier per 3000 m
  double correlation_length = 10.0; // storm blur sigma, HR cells
  double gamma_shape = 2.0;         // daily intensity draw; smaller = heavier tail
  double amount_scale = 8.0;        // mm/day per unit of storm excess
  double wetness_spread = 0.5;      // sd of the daily threshold anomaly
  double terrain_exponent = 3.0;    // power-spectrum slope of the terrain
  Date start = std::chrono::year{1980} / 1 / 1;
  GeoRef ref{49.9375, -124.6875, 0.125, 0.125};

  /// Throws DimensionError on dims not divisible by 8, DataError on zero days or out-of-range
  /// parameters.
  void validate() const;
};

/// Power-law filtered white noise rescaled to [0, 3000] m.
GeoGrid gen_elevation(const SynthConfig& cfg);

/// Daily precipitation on the elevation lattice. Day d uses its own random
/// stream, so output does not depend on `threads`.
GridSeries gen_precip_series(const GeoGrid& elevation, const SynthConfig& cfg, unsigned threads = 1);

/// Chronological split: the first round(n * fraction) days train.
std::pair<GridSeries, GridSeries> split_train_test(const GridSeries& series, double train_fraction);

/// Separable Gaussian blur with clamped borders, kernel truncated at 3 sigma.
GeoGrid gaussian_blur(const GeoGrid& g, double sigma);

/// Inverse standard normal CDF.
double normal_quantile(double p);

}  // namespace deepsd
