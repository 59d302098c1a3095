#include "deepsd/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "deepsd/errors.hpp"

namespace deepsd {

bool GeoRef::matches(const GeoRef& other, double tol) const {
  return std::abs(lat0 - other.lat0) <= tol && std::abs(lon0 - other.lon0) <= tol &&
         std::abs(dlat - other.dlat) <= tol && std::abs(dlon - other.dlon) <= tol;
}

namespace {

void check_ref(const GeoRef& ref) {
  if (!(ref.dlat > 0.0) || !(ref.dlon > 0.0)) {
    throw DimensionError("grid spacing must be positive");
  }
}

}  // namespace

GeoGrid::GeoGrid(std::size_t rows, std::size_t cols, GeoRef ref, double fill)
    : rows_(rows), cols_(cols), ref_(ref), values_(rows * cols, fill) {
  if (rows == 0 || cols == 0) throw DimensionError("grid dims must be >= 1");
  check_ref(ref);
}

GeoGrid::GeoGrid(std::size_t rows, std::size_t cols, GeoRef ref, std::vector<double> values)
    : rows_(rows), cols_(cols), ref_(ref), values_(std::move(values)) {
  if (rows == 0 || cols == 0) throw DimensionError("grid dims must be >= 1");
  if (values_.size() != rows * cols) {
    throw DimensionError("value count " + std::to_string(values_.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  check_ref(ref);
}

void GeoGrid::set_ref(const GeoRef& ref) {
  check_ref(ref);
  ref_ = ref;
}

double GeoGrid::mean() const {
  return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(size());
}

double GeoGrid::min() const { return *std::min_element(values_.begin(), values_.end()); }

double GeoGrid::max() const { return *std::max_element(values_.begin(), values_.end()); }

GeoGrid GeoGrid::window(std::size_t r0, std::size_t c0, std::size_t h, std::size_t w) const {
  if (r0 + h > rows_ || c0 + w > cols_) {
    throw DimensionError("window exceeds grid bounds");
  }
  GeoRef ref = ref_;
  ref.lat0 -= static_cast<double>(r0) * ref_.dlat;
  ref.lon0 += static_cast<double>(c0) * ref_.dlon;
  GeoGrid out(h, w, ref);
  for (std::size_t r = 0; r < h; ++r) {
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>((r0 + r) * cols_ + c0), w,
                out.values_.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  return out;
}

ChannelStack::ChannelStack(std::vector<GeoGrid> channels, std::vector<std::string> roles)
    : channels_(std::move(channels)), roles_(std::move(roles)) {
  if (channels_.empty()) throw DimensionError("channel stack needs at least one channel");
  if (roles_.size() != channels_.size()) throw DimensionError("one role per channel required");
  for (const auto& ch : channels_) {
    if (!ch.same_shape(channels_.front()) || !ch.ref().matches(channels_.front().ref())) {
      throw DimensionError("channels must share dims and georeference");
    }
  }
}

NormStats fit_norm_stats(const ChannelStack& cs) {
  NormStats stats;
  for (std::size_t c = 0; c < cs.channels(); ++c) {
    const auto v = cs[c].values();
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    stats.mean.push_back(mean);
    stats.std.push_back(std::max(std::sqrt(ss / n), NormStats::kStdFloor));
  }
  return stats;
}

GeoGrid coarsen(const GeoGrid& g, int factor) {
  if (factor < 2) throw DimensionError("coarsen factor must be >= 2");
  const auto f = static_cast<std::size_t>(factor);
  if (g.rows() % f != 0 || g.cols() % f != 0) {
    throw DimensionError("cannot coarsen " + std::to_string(g.rows()) + "x" +
                         std::to_string(g.cols()) + " by " + std::to_string(factor));
  }
  const GeoRef& in = g.ref();
  GeoRef ref;
  ref.dlat = in.dlat * factor;
  ref.dlon = in.dlon * factor;
  // North-west corner is shared by both lattices.
  ref.lat0 = in.lat0 + 0.5 * in.dlat - 0.5 * ref.dlat;
  ref.lon0 = in.lon0 - 0.5 * in.dlon + 0.5 * ref.dlon;

  GeoGrid out(g.rows() / f, g.cols() / f, ref);
  const double inv = 1.0 / static_cast<double>(f * f);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      double sum = 0.0;
      for (std::size_t i = 0; i < f; ++i) {
        for (std::size_t j = 0; j < f; ++j) sum += g(r * f + i, c * f + j);
      }
      out(r, c) = sum * inv;
    }
  }
  return out;
}

std::array<double, 4> catmull_rom_weights(double t) {
  constexpr double a = -0.5;
  const auto near = [](double x) { return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0; };
  const auto far = [](double x) { return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a; };
  return {far(1.0 + t), near(t), near(1.0 - t), far(2.0 - t)};
}

namespace {

struct Taps {
  std::array<std::size_t, 4> index;
  std::array<double, 4> weight;
};

Taps taps_at(double x, std::size_t n) {
  const double base = std::floor(x);
  const auto w = catmull_rom_weights(x - base);
  Taps taps{};
  const auto last = static_cast<long long>(n) - 1;
  for (int k = 0; k < 4; ++k) {
    const long long i = std::clamp(static_cast<long long>(base) - 1 + k, 0LL, last);
    taps.index[k] = static_cast<std::size_t>(i);
    taps.weight[k] = w[k];
  }
  return taps;
}

std::vector<Taps> upsample_taps(std::size_t n, int factor) {
  std::vector<Taps> taps(n * static_cast<std::size_t>(factor));
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const double x = (static_cast<double>(i) + 0.5) / factor - 0.5;
    taps[i] = taps_at(x, n);
  }
  return taps;
}

}  // namespace

double cubic_sample(std::span<const double> samples, double x) {
  if (samples.empty()) throw DimensionError("cubic_sample on empty sequence");
  const Taps t = taps_at(x, samples.size());
  double v = 0.0;
  for (int k = 0; k < 4; ++k) v += t.weight[k] * samples[t.index[k]];
  return v;
}

GeoGrid bicubic_upsample(const GeoGrid& g, int factor) {
  if (factor < 2) throw DimensionError("upsample factor must be >= 2");
  const std::size_t rows = g.rows() * static_cast<std::size_t>(factor);
  const std::size_t cols = g.cols() * static_cast<std::size_t>(factor);
  const auto row_taps = upsample_taps(g.rows(), factor);
  const auto col_taps = upsample_taps(g.cols(), factor);

  // Horizontal pass on the coarse rows, then vertical pass.
  std::vector<double> tmp(g.rows() * cols);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const Taps& t = col_taps[c];
      double v = 0.0;
      for (int k = 0; k < 4; ++k) v += t.weight[k] * g(r, t.index[k]);
      tmp[r * cols + c] = v;
    }
  }

  const GeoRef& in = g.ref();
  GeoRef ref;
  ref.dlat = in.dlat / factor;
  ref.dlon = in.dlon / factor;
  ref.lat0 = in.lat0 + 0.5 * in.dlat - 0.5 * ref.dlat;
  ref.lon0 = in.lon0 - 0.5 * in.dlon + 0.5 * ref.dlon;

  GeoGrid out(rows, cols, ref);
  for (std::size_t r = 0; r < rows; ++r) {
    const Taps& t = row_taps[r];
    for (std::size_t c = 0; c < cols; ++c) {
      double v = 0.0;
      for (int k = 0; k < 4; ++k) v += t.weight[k] * tmp[t.index[k] * cols + c];
      out(r, c) = v;
    }
  }
  return out;
}

GeoGrid normalize_channel(const GeoGrid& g, const NormStats& stats, std::size_t channel) {
  if (channel >= stats.channels()) throw DimensionError("normalization channel out of range");
  GeoGrid out = g;
  const double m = stats.mean[channel];
  const double s = stats.std[channel];
  for (double& v : out.values()) v = (v - m) / s;
  return out;
}

GeoGrid denormalize_channel(const GeoGrid& g, const NormStats& stats, std::size_t channel) {
  if (channel >= stats.channels()) throw DimensionError("normalization channel out of range");
  GeoGrid out = g;
  const double m = stats.mean[channel];
  const double s = stats.std[channel];
  for (double& v : out.values()) v = v * s + m;
  return out;
}

namespace {

template <typename Fn>
ChannelStack map_channels(const ChannelStack& cs, const NormStats& stats, Fn fn) {
  if (stats.channels() != cs.channels() || stats.std.size() != stats.mean.size()) {
    throw DimensionError("normalization stats have " + std::to_string(stats.channels()) +
                         " channels, stack has " + std::to_string(cs.channels()));
  }
  std::vector<GeoGrid> out;
  out.reserve(cs.channels());
  for (std::size_t c = 0; c < cs.channels(); ++c) out.push_back(fn(cs[c], stats, c));
  return ChannelStack(std::move(out), cs.roles());
}

}  // namespace

ChannelStack normalize(const ChannelStack& cs, const NormStats& stats) {
  return map_channels(cs, stats, normalize_channel);
}

ChannelStack denormalize(const ChannelStack& cs, const NormStats& stats) {
  return map_channels(cs, stats, denormalize_channel);
}

GeoGrid replicate_pad(const GeoGrid& g, std::size_t width) {
  const std::size_t rows = g.rows() + 2 * width;
  const std::size_t cols = g.cols() + 2 * width;
  GeoRef ref = g.ref();
  ref.lat0 += static_cast<double>(width) * ref.dlat;
  ref.lon0 -= static_cast<double>(width) * ref.dlon;
  GeoGrid out(rows, cols, ref);
  const auto clamp_index = [width](std::size_t i, std::size_t n) {
    return i < width ? 0 : std::min(i - width, n - 1);
  };
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t sr = clamp_index(r, g.rows());
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = g(sr, clamp_index(c, g.cols()));
  }
  return out;
}

GeoGrid crop(const GeoGrid& g, std::size_t width) {
  if (2 * width >= g.rows() || 2 * width >= g.cols()) {
    throw DimensionError("crop width leaves an empty grid");
  }
  return g.window(width, width, g.rows() - 2 * width, g.cols() - 2 * width);
}

}  // namespace deepsd
