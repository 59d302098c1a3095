#include "deepsd/bcsd.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "deepsd/errors.hpp"
#include "deepsd/raster_io.hpp"

namespace deepsd {

GeoGrid bcsd_interpolate(const GeoGrid& hr, int factor) {
  return bicubic_upsample(coarsen(hr, factor), factor);
}

BcsdModel fit_bcsd(const GridSeries& hr_obs_train, const BcsdOptions& options) {
  hr_obs_train.validate();
  if (hr_obs_train.empty()) throw DataError("BCSD training series is empty");
  if (!(options.denominator_floor > 0.0) || !(options.factor_cap > 0.0)) {
    throw DataError("BCSD floor and cap must be positive");
  }
  const GeoGrid& first = hr_obs_train.days.front();
  const auto f = static_cast<std::size_t>(options.factor);
  if (options.factor < 2 || first.rows() % f != 0 || first.cols() % f != 0) {
    throw DimensionError("BCSD factor " + std::to_string(options.factor) + " does not divide " +
                         std::to_string(first.rows()) + "x" + std::to_string(first.cols()));
  }

  std::array<std::vector<double>, 12> obs_sum, interp_sum;
  std::array<std::size_t, 12> count{};
  for (std::size_t m = 0; m < 12; ++m) {
    obs_sum[m].assign(first.size(), 0.0);
    interp_sum[m].assign(first.size(), 0.0);
  }
  for (std::size_t d = 0; d < hr_obs_train.size(); ++d) {
    const std::size_t m = month_of(hr_obs_train.dates[d]) - 1;
    const GeoGrid& hr = hr_obs_train.days[d];
    const GeoGrid interp = bcsd_interpolate(hr, options.factor);
    const auto hv = hr.values();
    const auto iv = interp.values();
    for (std::size_t i = 0; i < hv.size(); ++i) {
      obs_sum[m][i] += hv[i];
      interp_sum[m][i] += iv[i];
    }
    ++count[m];
  }

  BcsdModel model;
  model.options = options;
  model.lr_template = coarsen(first, options.factor);
  model.training_period =
      format_date(hr_obs_train.dates.front()) + "/" + format_date(hr_obs_train.dates.back());
  for (std::size_t m = 0; m < 12; ++m) {
    if (count[m] == 0) {
      throw DataError("BCSD training series has no days in calendar month " + std::to_string(m + 1));
    }
    const double n = static_cast<double>(count[m]);
    GeoGrid factors(first.rows(), first.cols(), first.ref());
    auto fv = factors.values();
    for (std::size_t i = 0; i < fv.size(); ++i) {
      const double obs_mean = obs_sum[m][i] / n;
      const double interp_mean = std::max(interp_sum[m][i] / n, options.denominator_floor);
      fv[i] = std::clamp(obs_mean / interp_mean, 0.0, options.factor_cap);
    }
    model.factors[m] = std::move(factors);
  }
  return model;
}

GeoGrid downscale_bcsd_day(const BcsdModel& model, const GeoGrid& lr, unsigned month) {
  const GeoGrid& tmpl = model.lr_template;
  if (!lr.same_shape(tmpl) || !lr.ref().matches(tmpl.ref())) {
    throw DataError("LR lattice " + std::to_string(lr.rows()) + "x" + std::to_string(lr.cols()) +
                    " does not match BCSD model lattice " + std::to_string(tmpl.rows()) + "x" +
                    std::to_string(tmpl.cols()));
  }
  GeoGrid out = bicubic_upsample(lr, model.options.factor);
  const auto fv = model.factors_for(month).values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::max(0.0, ov[i] * fv[i]);
  return out;
}

GridSeries downscale_bcsd(const BcsdModel& model, const GridSeries& lr_series, unsigned threads) {
  lr_series.validate();
  return map_series(
      lr_series,
      [&](const GeoGrid& g, std::size_t d) {
        return downscale_bcsd_day(model, g, month_of(lr_series.dates[d]));
      },
      threads);
}

namespace {

std::string factor_file(std::size_t month) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "factors_%02zu.grd", month);
  return buf;
}

}  // namespace

void save_bcsd(const BcsdModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = "BCSD1";
  manifest["factor"] = model.options.factor;
  manifest["denominator_floor"] = model.options.denominator_floor;
  manifest["factor_cap"] = model.options.factor_cap;
  manifest["training_period"] = model.training_period;
  manifest["months"] = nlohmann::json::array();
  for (std::size_t m = 1; m <= 12; ++m) {
    manifest["months"].push_back(factor_file(m));
    write_raster(model.factors[m - 1], dir / factor_file(m));
  }
  write_raster(model.lr_template, dir / "lr_template.grd");
  std::ofstream f(dir / "bcsd_manifest.json", std::ios::trunc);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot write BCSD manifest in " + dir.string());
  f << manifest.dump(2) << '\n';
}

BcsdModel load_bcsd(const std::filesystem::path& dir) {
  const auto path = dir / "bcsd_manifest.json";
  std::ifstream f(path);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot open " + path.string());
  BcsdModel model;
  try {
    nlohmann::json manifest;
    f >> manifest;
    model.options.factor = manifest.at("factor").get<int>();
    model.options.denominator_floor = manifest.at("denominator_floor").get<double>();
    model.options.factor_cap = manifest.at("factor_cap").get<double>();
    model.training_period = manifest.at("training_period").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseError::Kind::kSyntax, path.string() + ": " + e.what());
  }
  for (std::size_t m = 1; m <= 12; ++m) model.factors[m - 1] = read_raster(dir / factor_file(m));
  model.lr_template = read_raster(dir / "lr_template.grd");
  return model;
}

}  // namespace deepsd
