#include "deepsd/series.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "deepsd/errors.hpp"
#include "deepsd/parallel.hpp"
#include "deepsd/raster_io.hpp"

namespace deepsd {

using namespace std::chrono;

std::vector<Date> consecutive_dates(Date start, std::size_t count) {
  std::vector<Date> out;
  out.reserve(count);
  sys_days d{start};
  for (std::size_t i = 0; i < count; ++i, d += days{1}) out.emplace_back(d);
  return out;
}

Date parse_date(const std::string& iso) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(iso.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3) {
    throw ParseError(ParseError::Kind::kSyntax, "bad date '" + iso + "', expected YYYY-MM-DD");
  }
  const Date date{year{y}, month{m}, day{d}};
  if (!date.ok()) throw ParseError(ParseError::Kind::kSyntax, "invalid date '" + iso + "'");
  return date;
}

std::string format_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

unsigned month_of(Date d) { return static_cast<unsigned>(d.month()); }

void GridSeries::validate() const {
  if (dates.size() != days.size()) {
    throw DataError("series has " + std::to_string(days.size()) + " rasters but " +
                    std::to_string(dates.size()) + " dates");
  }
  for (const auto& g : days) {
    if (!g.same_shape(days.front()) || !g.ref().matches(days.front().ref())) {
      throw DataError("series rasters do not share one lattice");
    }
  }
}

GridSeries GridSeries::slice(std::size_t first, std::size_t count) const {
  if (first + count > days.size()) throw DataError("series slice out of range");
  GridSeries out;
  out.variable = variable;
  out.units = units;
  out.days.assign(days.begin() + static_cast<std::ptrdiff_t>(first),
                  days.begin() + static_cast<std::ptrdiff_t>(first + count));
  out.dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(first),
                   dates.begin() + static_cast<std::ptrdiff_t>(first + count));
  return out;
}

std::string series_day_filename(const std::string& variable, std::size_t day) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%05zu.grd", day);
  return variable + buf;
}

void write_series(const GridSeries& series, const std::filesystem::path& dir) {
  series.validate();
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = "GRD1-series";
  manifest["variable"] = series.variable;
  manifest["units"] = series.units;
  manifest["days"] = series.size();
  manifest["start_date"] = series.empty() ? "" : format_date(series.dates.front());
  manifest["file_pattern"] = series.variable + "_%05d.grd";
  if (!series.empty()) {
    manifest["rows"] = series.days.front().rows();
    manifest["cols"] = series.days.front().cols();
  }
  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot write " + (dir / "manifest.json").string());
  f << manifest.dump(2) << '\n';
  for (std::size_t i = 0; i < series.size(); ++i) {
    write_raster(series.days[i], dir / series_day_filename(series.variable, i));
  }
}

GridSeries read_series(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream f(path);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot open " + path.string());
  nlohmann::json manifest;
  try {
    f >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseError::Kind::kSyntax, path.string() + ": " + e.what());
  }
  GridSeries series;
  try {
    series.variable = manifest.at("variable").get<std::string>();
    series.units = manifest.at("units").get<std::string>();
    const auto count = manifest.at("days").get<std::size_t>();
    if (count > 0) {
      series.dates = consecutive_dates(parse_date(manifest.at("start_date").get<std::string>()), count);
    }
    for (std::size_t i = 0; i < count; ++i) {
      series.days.push_back(read_raster(dir / series_day_filename(series.variable, i)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseError::Kind::kSyntax, path.string() + ": " + e.what());
  }
  series.validate();
  return series;
}

GridSeries map_series(const GridSeries& in,
                      const std::function<GeoGrid(const GeoGrid&, std::size_t)>& fn,
                      unsigned threads) {
  GridSeries out;
  out.variable = in.variable;
  out.units = in.units;
  out.dates = in.dates;
  out.days.resize(in.size());
  parallel_for(in.size(), threads, [&](std::size_t i) { out.days[i] = fn(in.days[i], i); });
  return out;
}

}  // namespace deepsd
