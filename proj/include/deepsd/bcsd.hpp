#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "deepsd/grid.hpp"
#include "deepsd/series.hpp"

namespace deepsd {

struct BcsdOptions {
  int factor = 8;
  double denominator_floor = 0.01;  // mm/day
  double factor_cap = 10.0;
};

/// Per-cell, per-calendar-month multiplicative correction fitted on a
/// training period.
struct BcsdModel {
  BcsdOptions options;
  std::array<GeoGrid, 12> factors;  // index 0 = January, on the HR lattice
  GeoGrid lr_template;              // LR lattice (values unused)
  std::string training_period;      // "YYYY-MM-DD/YYYY-MM-DD"

  const GeoGrid& factors_for(unsigned month) const { return factors.at(month - 1); }
};

/// The coarsen-then-interpolate round trip that strips sub-grid detail.
GeoGrid bcsd_interpolate(const GeoGrid& hr, int factor);

/// Factor = monthly mean of HR obs / max(monthly mean of the interpolated
/// field, floor), capped. Throws DataError if any calendar month has no
/// training day.
BcsdModel fit_bcsd(const GridSeries& hr_obs_train, const BcsdOptions& options = {});

/// Bicubic-upsample each LR day and multiply by its month's factors; negative
/// values clamp to zero.
GridSeries downscale_bcsd(const BcsdModel& model, const GridSeries& lr_series,
                          unsigned threads = 1);
GeoGrid downscale_bcsd_day(const BcsdModel& model, const GeoGrid& lr, unsigned month);

/// Model layout: `<dir>/bcsd_manifest.json` plus `<dir>/factors_MM.grd`
/// (MM = 01..12). Factors are stored as f32 like every raster.
void save_bcsd(const BcsdModel& model, const std::filesystem::path& dir);
BcsdModel load_bcsd(const std::filesystem::path& dir);

}  // namespace deepsd
