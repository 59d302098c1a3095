#include "deepsd/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <fftw3.h>

#include "deepsd/errors.hpp"
#include "deepsd/parallel.hpp"
#include "deepsd/random.hpp"

namespace deepsd {

namespace {

constexpr std::uint64_t kTerrainStream = 0x7e77a1;
constexpr std::uint64_t kDayStreamBase = 0xda7000000ULL;

}  // namespace

void SynthConfig::validate() const {
  if (rows == 0 || cols == 0 || rows % 8 != 0 || cols % 8 != 0) {
    throw DimensionError("synthetic grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                    " must have both dims divisible by 8");
  }
  if (days == 0) throw DataError("synthetic day count must be >= 1");
  if (!(rain_fraction > 0.0 && rain_fraction < 1.0)) throw DataError("rain fraction must be in (0, 1)");
  if (!(coupling >= 0.0)) throw DataError("orographic coupling must be >= 0");
  if (!(correlation_length > 0.0)) throw DataError("storm correlation length must be > 0");
  if (!(gamma_shape > 0.0) || !(amount_scale > 0.0)) throw DataError("amount parameters must be > 0");
  if (!(wetness_spread >= 0.0) || !(terrain_exponent >= 0.0)) throw DataError("negative spread or exponent");
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DataError("normal quantile needs p in (0, 1)");
  // Acklam's rational approximation, then one Halley step.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01, -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double lo = 0.02425;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - lo) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

GeoGrid gen_elevation(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t rows = cfg.rows, cols = cfg.cols;
  const std::size_t half = cols / 2 + 1;
  Rng rng(cfg.seed, kTerrainStream);

  std::vector<double> field(rows * cols);
  for (auto& v : field) v = rng.normal();
  auto* spectrum = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * rows * half));
  fftw_plan fwd = fftw_plan_dft_r2c_2d(static_cast<int>(rows), static_cast<int>(cols), field.data(),
                                       spectrum, FFTW_ESTIMATE);
  fftw_execute(fwd);
  fftw_destroy_plan(fwd);

  // Amplitude ~ k^(-beta/2) gives a power spectrum ~ k^(-beta); the mean
  // component is removed.
  for (std::size_t r = 0; r < rows; ++r) {
    const double ky = static_cast<double>(r <= rows / 2 ? r : rows - r) / static_cast<double>(rows);
    for (std::size_t c = 0; c < half; ++c) {
      const double kx = static_cast<double>(c) / static_cast<double>(cols);
      const double k = std::hypot(kx, ky);
      const double gain = k > 0.0 ? std::pow(k, -0.5 * cfg.terrain_exponent) : 0.0;
      spectrum[r * half + c][0] *= gain;
      spectrum[r * half + c][1] *= gain;
    }
  }
  fftw_plan inv = fftw_plan_dft_c2r_2d(static_cast<int>(rows), static_cast<int>(cols), spectrum,
                                       field.data(), FFTW_ESTIMATE);
  fftw_execute(inv);
  fftw_destroy_plan(inv);
  fftw_free(spectrum);

  const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
  const double vmin = *lo, span = *hi - *lo;
  for (auto& v : field) v = span > 0.0 ? std::clamp((v - vmin) / span * 3000.0, 0.0, 3000.0) : 0.0;
  return GeoGrid(rows, cols, cfg.ref, std::move(field));
}

GeoGrid gaussian_blur(const GeoGrid& g, double sigma) {
  if (!(sigma > 0.0)) throw DataError("blur sigma must be > 0");
  const auto radius = static_cast<long long>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (long long i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = w;
    total += w;
  }
  for (auto& w : kernel) w /= total;

  const auto rows = static_cast<long long>(g.rows());
  const auto cols = static_cast<long long>(g.cols());
  GeoGrid tmp(g.rows(), g.cols(), g.ref());
  for (long long r = 0; r < rows; ++r) {
    for (long long c = 0; c < cols; ++c) {
      double s = 0.0;
      for (long long i = -radius; i <= radius; ++i) {
        const auto cc = std::clamp(c + i, 0LL, cols - 1);
        s += kernel[static_cast<std::size_t>(i + radius)] * g(static_cast<std::size_t>(r), static_cast<std::size_t>(cc));
      }
      tmp(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = s;
    }
  }
  GeoGrid out(g.rows(), g.cols(), g.ref());
  for (long long r = 0; r < rows; ++r) {
    for (long long c = 0; c < cols; ++c) {
      double s = 0.0;
      for (long long i = -radius; i <= radius; ++i) {
        const auto rr = std::clamp(r + i, 0LL, rows - 1);
        s += kernel[static_cast<std::size_t>(i + radius)] * tmp(static_cast<std::size_t>(rr), static_cast<std::size_t>(c));
      }
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = s;
    }
  }
  return out;
}

namespace {

GeoGrid gen_day(const GeoGrid& elevation, const SynthConfig& cfg, double base_threshold, std::size_t day) {
  Rng rng(cfg.seed, kDayStreamBase + day);
  GeoGrid noise(cfg.rows, cfg.cols, cfg.ref);
  for (auto& v : noise.values()) v = rng.normal();
  GeoGrid storm = gaussian_blur(noise, cfg.correlation_length);

  // Standardise so the threshold controls the wet fraction directly.
  const double mean = storm.mean();
  double var = 0.0;
  for (double v : storm.values()) var += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / static_cast<double>(storm.size())), 1e-12);

  // The anomaly widens the spread of daily wet fractions; the base threshold
  // is scaled so the marginal wet probability stays at rain_fraction.
  const double threshold = base_threshold + cfg.wetness_spread * rng.normal();
  const double intensity = rng.gamma(cfg.gamma_shape) / cfg.gamma_shape;

  GeoGrid out(cfg.rows, cfg.cols, cfg.ref);
  const auto sv = storm.values();
  const auto ev = elevation.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const double excess = (sv[i] - mean) / sd - threshold;
    ov[i] = excess > 0.0 ? cfg.amount_scale * intensity * excess * (1.0 + cfg.coupling * ev[i] / 3000.0) : 0.0;
  }
  return out;
}

}  // namespace

GridSeries gen_precip_series(const GeoGrid& elevation, const SynthConfig& cfg, unsigned threads) {
  cfg.validate();
  if (elevation.rows() != cfg.rows || elevation.cols() != cfg.cols) {
    throw DimensionError("elevation is " + std::to_string(elevation.rows()) + "x" +
                         std::to_string(elevation.cols()) + ", config expects " +
                         std::to_string(cfg.rows) + "x" + std::to_string(cfg.cols));
  }
  const double base = normal_quantile(1.0 - cfg.rain_fraction) *
                      std::sqrt(1.0 + cfg.wetness_spread * cfg.wetness_spread);
  GridSeries out;
  out.days.resize(cfg.days);
  out.dates = consecutive_dates(cfg.start, cfg.days);
  parallel_for(cfg.days, threads, [&](std::size_t d) { out.days[d] = gen_day(elevation, cfg, base, d); });
  return out;
}

std::pair<GridSeries, GridSeries> split_train_test(const GridSeries& series, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw DataError("train fraction must be in (0, 1)");
  }
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(series.size()) * train_fraction));
  if (n_train == 0 || n_train >= series.size()) {
    throw DataError("split of " + std::to_string(series.size()) + " days at " +
                    std::to_string(train_fraction) + " leaves an empty side");
  }
  return {series.slice(0, n_train), series.slice(n_train, series.size() - n_train)};
}

}  // namespace deepsd
