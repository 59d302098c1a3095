#include "deepsd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "deepsd/errors.hpp"
#include "deepsd/random.hpp"

namespace deepsd {

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw DataError("percentile of an empty series");
  if (p < 0.0 || p > 100.0) throw DataError("percentile outside [0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = (static_cast<double>(sorted.size()) - 1.0) * p / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Histogram make_histogram(std::span<const double> values, double lo, double bin_width,
                         std::size_t bins) {
  if (values.empty() || bins == 0 || !(bin_width > 0.0)) {
    throw DataError("histogram needs values, bins and a positive bin width");
  }
  Histogram h{lo, bin_width, std::vector<double>(bins, 0.0)};
  for (double v : values) {
    const double idx = std::floor((v - lo) / bin_width);
    const auto i = static_cast<std::size_t>(std::clamp(idx, 0.0, static_cast<double>(bins - 1)));
    h.masses[i] += 1.0;
  }
  const double n = static_cast<double>(values.size());
  for (double& m : h.masses) m /= n;
  return h;
}

double perkins_skill(std::span<const double> obs, std::span<const double> pred, double bin_width) {
  if (obs.empty() || pred.empty()) throw DataError("skill needs nonempty series");
  const auto [omin, omax] = std::minmax_element(obs.begin(), obs.end());
  const auto [pmin, pmax] = std::minmax_element(pred.begin(), pred.end());
  const double lo = std::min(0.0, std::floor(std::min(*omin, *pmin) / bin_width) * bin_width);
  const double hi = std::max(*omax, *pmax);
  const auto bins = static_cast<std::size_t>(std::floor((hi - lo) / bin_width)) + 1;
  const Histogram zo = make_histogram(obs, lo, bin_width, bins);
  const Histogram zm = make_histogram(pred, lo, bin_width, bins);
  double skill = 0.0;
  for (std::size_t i = 0; i < bins; ++i) skill += std::min(zo.masses[i], zm.masses[i]);
  return std::min(skill, 1.0);
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) return std::nullopt;
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

LocationMetrics location_metrics(std::span<const double> obs, std::span<const double> pred,
                                 double bin_width) {
  if (obs.size() != pred.size()) throw DataError("obs and pred lengths differ");
  if (obs.size() < 2) throw DataError("metrics need at least two days");
  LocationMetrics m;
  m.samples = obs.size();
  double err = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double d = pred[i] - obs[i];
    err += d;
    sq += d * d;
  }
  const double n = static_cast<double>(obs.size());
  m.bias = err / n;
  m.rmse = std::sqrt(sq / n);
  m.corr = pearson(obs, pred);
  m.skill = perkins_skill(obs, pred, bin_width);
  return m;
}

namespace {

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  s.count = values.size();
  if (values.empty()) {
    s.mean = s.q25 = s.q75 = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  s.q25 = percentile(values, 25.0);
  s.q75 = percentile(values, 75.0);
  return s;
}

void check_series(const LocationSeries& obs, const LocationSeries& pred) {
  if (obs.size() != pred.size()) throw DataError("obs and pred location counts differ");
  if (obs.empty()) throw DataError("no locations to evaluate");
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i].size() != pred[i].size()) throw DataError("obs and pred day counts differ");
  }
}

}  // namespace

EvalReport aggregate(std::string scope, std::string key, std::vector<LocationMetrics> per_location) {
  EvalReport r;
  r.scope = std::move(scope);
  r.key = std::move(key);
  std::vector<double> bias, corr, rmse, skill;
  for (const auto& m : per_location) {
    bias.push_back(m.bias);
    if (m.corr) corr.push_back(*m.corr);
    rmse.push_back(m.rmse);
    skill.push_back(m.skill);
  }
  r.bias = summarize(bias);
  r.corr = summarize(corr);
  r.rmse = summarize(rmse);
  r.skill = summarize(skill);
  r.per_location = std::move(per_location);
  return r;
}

EvalReport overall_report(const LocationSeries& obs, const LocationSeries& pred, double bin_width) {
  check_series(obs, pred);
  std::vector<LocationMetrics> per;
  for (std::size_t i = 0; i < obs.size(); ++i) per.push_back(location_metrics(obs[i], pred[i], bin_width));
  EvalReport r = aggregate("all", "", std::move(per));
  r.days = obs.front().size();
  return r;
}

Season season_of(Date d) {
  switch (month_of(d)) {
    case 12: case 1: case 2: return Season::kDJF;
    case 3: case 4: case 5: return Season::kMAM;
    case 6: case 7: case 8: return Season::kJJA;
    default: return Season::kSON;
  }
}

const char* season_name(Season s) {
  switch (s) {
    case Season::kDJF: return "DJF";
    case Season::kMAM: return "MAM";
    case Season::kJJA: return "JJA";
    case Season::kSON: return "SON";
  }
  return "?";
}

std::vector<EvalReport> seasonal_report(const LocationSeries& obs, const LocationSeries& pred,
                                        const std::vector<Date>& dates, double bin_width) {
  check_series(obs, pred);
  if (dates.size() != obs.front().size()) throw DataError("date vector not aligned with series");
  std::vector<EvalReport> reports;
  for (Season s : {Season::kDJF, Season::kMAM, Season::kJJA, Season::kSON}) {
    std::vector<std::size_t> days;
    for (std::size_t d = 0; d < dates.size(); ++d) {
      if (season_of(dates[d]) == s) days.push_back(d);
    }
    if (days.size() < 2) {
      EvalReport r;
      r.scope = "season";
      r.key = season_name(s);
      r.omitted = true;
      r.days = days.size();
      r.note = "fewer than two days in season";
      reports.push_back(std::move(r));
      continue;
    }
    std::vector<LocationMetrics> per;
    std::vector<double> o(days.size()), p(days.size());
    for (std::size_t loc = 0; loc < obs.size(); ++loc) {
      for (std::size_t k = 0; k < days.size(); ++k) {
        o[k] = obs[loc][days[k]];
        p[k] = pred[loc][days[k]];
      }
      per.push_back(location_metrics(o, p, bin_width));
    }
    EvalReport r = aggregate("season", season_name(s), std::move(per));
    r.days = days.size();
    reports.push_back(std::move(r));
  }
  return reports;
}

namespace {

std::string threshold_key(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", p);
  return buf;
}

}  // namespace

std::vector<EvalReport> extreme_sweep(const LocationSeries& obs, const LocationSeries& pred,
                                      const std::vector<double>& thresholds,
                                      std::size_t min_events, double bin_width) {
  check_series(obs, pred);
  std::vector<EvalReport> reports;
  for (double p : thresholds) {
    std::vector<LocationMetrics> per;
    std::size_t events = 0, dropped = 0;
    for (std::size_t loc = 0; loc < obs.size(); ++loc) {
      const double t = percentile(obs[loc], p);
      std::vector<double> o, q;
      for (std::size_t d = 0; d < obs[loc].size(); ++d) {
        if (obs[loc][d] > t) {
          o.push_back(obs[loc][d]);
          q.push_back(pred[loc][d]);
        }
      }
      events += o.size();
      if (o.size() < std::max<std::size_t>(min_events, 2)) {
        ++dropped;
        continue;
      }
      per.push_back(location_metrics(o, q, bin_width));
    }
    if (events == 0) {
      throw DataError("percentile " + threshold_key(p) + " selects no event at any location");
    }
    EvalReport r = aggregate("percentile", threshold_key(p), std::move(per));
    r.events = events;
    r.dropped = dropped;
    if (r.per_location.empty()) {
      r.omitted = true;
      r.note = "every location has fewer than " + std::to_string(min_events) + " events";
    }
    reports.push_back(std::move(r));
  }
  return reports;
}

LocationSeries extract_locations(const GridSeries& series, const std::vector<CellIndex>& cells) {
  series.validate();
  if (series.empty()) throw DataError("cannot extract locations from an empty series");
  const GeoGrid& first = series.days.front();
  for (const auto& c : cells) {
    if (c.row >= first.rows() || c.col >= first.cols()) {
      throw DataError("location (" + std::to_string(c.row) + "," + std::to_string(c.col) +
                      ") outside grid");
    }
  }
  LocationSeries out(cells.size(), std::vector<double>(series.size()));
  for (std::size_t d = 0; d < series.size(); ++d) {
    for (std::size_t i = 0; i < cells.size(); ++i) out[i][d] = series.days[d](cells[i].row, cells[i].col);
  }
  return out;
}

std::vector<CellIndex> sample_locations(std::size_t rows, std::size_t cols, std::size_t count,
                                        std::uint64_t seed) {
  const std::size_t n = rows * cols;
  if (count > n) throw DataError("cannot sample more locations than cells");
  // Partial Fisher-Yates over cell indices.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed, 0x10ca7e);
  std::vector<CellIndex> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
    out.push_back({idx[i] / cols, idx[i] % cols});
  }
  return out;
}

std::vector<CellIndex> read_locations(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot open " + path.string());
  std::vector<CellIndex> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream in(line);
    long long r = 0, c = 0;
    if (!(in >> r)) continue;
    std::string rest;
    if (!(in >> c) || r < 0 || c < 0 || (in >> rest)) {
      throw ParseError(ParseError::Kind::kSyntax,
                       path.string() + ":" + std::to_string(lineno) + ": expected 'row col'");
    }
    out.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(c)});
  }
  return out;
}

void write_locations(const std::vector<CellIndex>& cells, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot write " + path.string());
  f << "# row col\n";
  for (const auto& c : cells) f << c.row << ' ' << c.col << '\n';
}

GeoGrid rmse_map(const GridSeries& obs, const GridSeries& pred) {
  obs.validate();
  pred.validate();
  if (obs.empty() || obs.size() != pred.size()) throw DataError("obs and pred day counts differ");
  const GeoGrid& first = obs.days.front();
  if (!first.same_shape(pred.days.front())) throw DataError("obs and pred lattices differ");
  GeoGrid out(first.rows(), first.cols(), first.ref());
  auto ov = out.values();
  for (std::size_t d = 0; d < obs.size(); ++d) {
    const auto o = obs.days[d].values();
    const auto p = pred.days[d].values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += (p[i] - o[i]) * (p[i] - o[i]);
  }
  for (double& v : ov) v = std::sqrt(v / static_cast<double>(obs.size()));
  return out;
}

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string report_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "scope,season_or_threshold,bias,corr,rmse,skill,q25_bias,q25_corr,q25_rmse,q25_skill,"
         "q75_bias,q75_corr,q75_rmse,q75_skill\n";
  for (const auto& r : reports) {
    out << r.scope << ',' << r.key;
    if (r.omitted) {
      for (int i = 0; i < 12; ++i) out << ",NA";
    } else {
      for (const MetricSummary* s : {&r.bias, &r.corr, &r.rmse, &r.skill}) out << ',' << fmt(s->mean);
      for (const MetricSummary* s : {&r.bias, &r.corr, &r.rmse, &r.skill}) out << ',' << fmt(s->q25);
      for (const MetricSummary* s : {&r.bias, &r.corr, &r.rmse, &r.skill}) out << ',' << fmt(s->q75);
    }
    out << '\n';
  }
  return out.str();
}

void write_report_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot write " + path.string());
  f << report_csv(reports);
}

}  // namespace deepsd
