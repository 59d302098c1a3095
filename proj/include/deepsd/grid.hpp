#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace deepsd {

/// Cell-centred lat/lon georeferencing. `lat0`/`lon0` locate the centre of
/// the north-west cell; rows advance southwards, columns eastwards.
struct GeoRef {
  double lat0 = 0.0;
  double lon0 = 0.0;
  double dlat = 1.0;
  double dlon = 1.0;

  /// True when both references describe the same lattice to `tol` degrees.
  bool matches(const GeoRef& other, double tol = 1e-9) const;
  bool operator==(const GeoRef&) const = default;
};

/// A 2-D raster of one variable. Values are held in double precision; the
/// on-disk format stores them as f32.
class GeoGrid {
 public:
  GeoGrid() = default;
  GeoGrid(std::size_t rows, std::size_t cols, GeoRef ref = {}, double fill = 0.0);
  GeoGrid(std::size_t rows, std::size_t cols, GeoRef ref, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  const GeoRef& ref() const noexcept { return ref_; }
  void set_ref(const GeoRef& ref);

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool same_shape(const GeoGrid& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double mean() const;
  double min() const;
  double max() const;

  /// Sub-window [r0, r0+h) x [c0, c0+w), georeference shifted accordingly.
  GeoGrid window(std::size_t r0, std::size_t c0, std::size_t h, std::size_t w) const;

  bool operator==(const GeoGrid& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  GeoRef ref_;
  std::vector<double> values_;
};

/// Ordered channels sharing one lattice, each tagged with a role
/// ("precip", "elevation", ...).
class ChannelStack {
 public:
  ChannelStack() = default;
  ChannelStack(std::vector<GeoGrid> channels, std::vector<std::string> roles);

  std::size_t channels() const noexcept { return channels_.size(); }
  std::size_t rows() const { return channels_.front().rows(); }
  std::size_t cols() const { return channels_.front().cols(); }

  const GeoGrid& operator[](std::size_t i) const { return channels_[i]; }
  GeoGrid& operator[](std::size_t i) { return channels_[i]; }
  const std::string& role(std::size_t i) const { return roles_[i]; }
  const std::vector<std::string>& roles() const noexcept { return roles_; }

 private:
  std::vector<GeoGrid> channels_;
  std::vector<std::string> roles_;
};

/// Per-channel affine normalisation statistics.
struct NormStats {
  static constexpr double kStdFloor = 1e-8;

  std::vector<double> mean;
  std::vector<double> std;

  std::size_t channels() const noexcept { return mean.size(); }
  bool operator==(const NormStats&) const = default;
};

/// Population mean/std of each channel, std floored at NormStats::kStdFloor.
NormStats fit_norm_stats(const ChannelStack& cs);

/// Area-mean block pooling. Throws DimensionError unless both dims divide.
GeoGrid coarsen(const GeoGrid& g, int factor);

/// Catmull-Rom (a = -0.5) weights for the four taps around a sample at
/// fractional offset t in [0, 1) from tap 1.
std::array<double, 4> catmull_rom_weights(double t);

/// Cubic interpolation of a 1-D sequence at fractional index x, borders
/// clamped.
double cubic_sample(std::span<const double> samples, double x);

/// Separable Catmull-Rom upsampling with replicated borders. Output cell
/// centres sit on the refined lattice covering the same extent.
GeoGrid bicubic_upsample(const GeoGrid& g, int factor);

ChannelStack normalize(const ChannelStack& cs, const NormStats& stats);
ChannelStack denormalize(const ChannelStack& cs, const NormStats& stats);
GeoGrid normalize_channel(const GeoGrid& g, const NormStats& stats, std::size_t channel);
GeoGrid denormalize_channel(const GeoGrid& g, const NormStats& stats, std::size_t channel);

/// Extends every border by `width` cells, repeating edge values.
GeoGrid replicate_pad(const GeoGrid& g, std::size_t width);

/// Removes `width` cells from each border.
GeoGrid crop(const GeoGrid& g, std::size_t width);

}  // namespace deepsd
