#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "deepsd/errors.hpp"
#include "deepsd/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace deepsd;

namespace {

std::vector<double> gamma_sample(std::size_t n, std::uint64_t seed, double shape = 0.8, double scale = 6.0) {
  Rng rng(seed, 3);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform() < 0.4 ? 0.0 : scale * rng.gamma(shape);
  return v;
}

std::vector<double> noisy_copy(const std::vector<double>& v, std::uint64_t seed) {
  Rng rng(seed, 4);
  std::vector<double> out(v);
  for (double& x : out) x = std::max(0.0, x + 2.0 * rng.normal());
  return out;
}

LocationSeries locations(std::size_t n, std::size_t days, std::uint64_t seed) {
  LocationSeries s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(gamma_sample(days, seed * 100 + i));
  return s;
}

LocationSeries perturbed(const LocationSeries& s, std::uint64_t seed) {
  LocationSeries out;
  for (std::size_t i = 0; i < s.size(); ++i) out.push_back(noisy_copy(s[i], seed * 100 + i));
  return out;
}

}  // namespace

TEST_SUITE("scalar metrics") {
  TEST_CASE("identity and shift") {
    const auto obs = gamma_sample(200, 1);
    const LocationMetrics same = location_metrics(obs, obs);
    CHECK(same.bias == 0.0);
    CHECK(*same.corr == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(same.rmse == 0.0);
    CHECK(same.skill == 1.0);
    CHECK(same.samples == 200);

    std::vector<double> shifted(obs);
    for (double& v : shifted) v += 2.0;
    const LocationMetrics s = location_metrics(obs, shifted);
    CHECK(s.bias == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(s.rmse == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(*s.corr == doctest::Approx(1.0).epsilon(1e-14));
  }

  TEST_CASE("random pairs match the direct-summation oracle") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto obs = gamma_sample(500, seed);
      const auto pred = noisy_copy(obs, seed + 50);
      const LocationMetrics m = location_metrics(obs, pred);
      CHECK(std::abs(m.bias - oracle::bias(obs, pred)) <= 1e-10);
      CHECK(std::abs(m.rmse - oracle::rmse(obs, pred)) <= 1e-10);
      CHECK(std::abs(*m.corr - oracle::pearson(obs, pred)) <= 1e-10);
      CHECK(std::abs(m.skill - oracle::skill(obs, pred)) <= 1e-10);
      CHECK(m.skill >= 0.0);
      CHECK(m.skill <= 1.0);
      CHECK(*m.corr >= -1.0);
      CHECK(*m.corr <= 1.0);
    }
  }

  TEST_CASE("constant series leave correlation undefined") {
    const std::vector<double> flat(30, 1.0);
    const auto other = gamma_sample(30, 2);
    const LocationMetrics m = location_metrics(flat, other);
    CHECK_FALSE(m.corr.has_value());
    CHECK(m.rmse == doctest::Approx(oracle::rmse(flat, other)));
    CHECK_FALSE(pearson(other, flat).has_value());
  }

  TEST_CASE("length mismatch and empty input are rejected") {
    const std::vector<double> a{1, 2, 3}, b{1, 2};
    CHECK_THROWS_AS(location_metrics(a, b), DataError);
    CHECK_THROWS(location_metrics(std::vector<double>{}, std::vector<double>{}));
  }

  TEST_CASE("percentile matches the sort-based oracle") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto v = gamma_sample(37 + seed * 50, seed);
      for (double p : {0.0, 1.0, 25.0, 50.0, 90.0, 97.5, 99.9, 100.0})
        CHECK(std::abs(percentile(v, p) - oracle::percentile(v, p)) <= 1e-12);
    }
    const std::vector<double> four{4, 1, 3, 2};
    CHECK(percentile(four, 50.0) == 2.5);
    CHECK_THROWS(percentile(four, 101.0));
  }
}

TEST_SUITE("skill") {
  TEST_CASE("worked examples") {
    const auto v = gamma_sample(100, 3);
    CHECK(perkins_skill(v, v) == 1.0);
    const std::vector<double> low{0.1, 0.5, 0.9, 0.2}, high{5.1, 5.5, 5.9, 5.3};
    CHECK(perkins_skill(low, high) == 0.0);
    const std::vector<double> two_bins{0.5, 0.5, 1.5, 1.5}, one_bin{0.2, 0.4, 0.6, 0.8};
    CHECK(perkins_skill(two_bins, one_bin) == doctest::Approx(0.5));
  }

  TEST_CASE("symmetric and bounded") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto a = gamma_sample(300, seed), b = noisy_copy(a, seed + 9);
      CHECK(perkins_skill(a, b) == doctest::Approx(perkins_skill(b, a)).epsilon(1e-14));
      CHECK(perkins_skill(a, b) <= 1.0);
      CHECK(perkins_skill(a, b, 0.5) == doctest::Approx(oracle::skill(a, b, 0.5)).epsilon(1e-12));
    }
  }

  TEST_CASE("histogram masses are a distribution") {
    const auto v = gamma_sample(400, 4);
    const Histogram h = make_histogram(v, 0.0, 1.0, 10);
    CHECK(h.masses.size() == 10);
    double total = 0.0;
    for (double m : h.masses) {
      CHECK(m >= 0.0);
      total += m;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_SUITE("seasons") {
  TEST_CASE("calendar enumeration") {
    const auto dates = consecutive_dates(std::chrono::year{2001} / 1 / 1, 365);
    std::array<std::size_t, 4> counts{};
    for (Date d : dates) ++counts[static_cast<std::size_t>(season_of(d))];
    CHECK(counts == std::array<std::size_t, 4>{90, 92, 92, 91});
    std::array<std::size_t, 4> to_november{};
    for (std::size_t i = 0; i < 334; ++i) ++to_november[static_cast<std::size_t>(season_of(dates[i]))];
    CHECK(to_november == std::array<std::size_t, 4>{59, 92, 92, 91});
    CHECK(std::string(season_name(Season::kSON)) == "SON");
  }

  TEST_CASE("seasonal report sizes and identity") {
    const auto dates = consecutive_dates(std::chrono::year{2001} / 1 / 1, 334);
    const LocationSeries obs = locations(5, 334, 5);
    const auto reports = seasonal_report(obs, obs, dates);
    REQUIRE(reports.size() == 4);
    const std::array<std::size_t, 4> sizes{59, 92, 92, 91};
    for (std::size_t s = 0; s < 4; ++s) {
      CHECK(reports[s].days == sizes[s]);
      CHECK(reports[s].rmse.mean == 0.0);
      CHECK(reports[s].corr.mean == doctest::Approx(1.0));
    }
  }

  TEST_CASE("empty seasons are omitted") {
    const auto dates = consecutive_dates(std::chrono::year{2001} / 6 / 1, 30);
    const LocationSeries obs = locations(3, 30, 6);
    const auto reports = seasonal_report(obs, obs, dates);
    CHECK(reports[0].omitted);
    CHECK_FALSE(reports[2].omitted);
    CHECK(reports[3].omitted);
  }

  TEST_CASE("location order does not matter") {
    const LocationSeries obs = locations(9, 120, 7), pred = perturbed(obs, 8);
    LocationSeries obs2 = obs, pred2 = pred;
    std::reverse(obs2.begin(), obs2.end());
    std::reverse(pred2.begin(), pred2.end());
    const EvalReport a = overall_report(obs, pred), b = overall_report(obs2, pred2);
    CHECK(a.rmse.mean == doctest::Approx(b.rmse.mean).epsilon(1e-14));
    CHECK(a.skill.mean == doctest::Approx(b.skill.mean).epsilon(1e-14));
    CHECK(a.bias.q25 == b.bias.q25);
    CHECK(a.corr.q75 == b.corr.q75);
  }

  TEST_CASE("spatial summary is the mean and quartiles of per-location values") {
    const LocationSeries obs = locations(11, 80, 9), pred = perturbed(obs, 10);
    const EvalReport r = overall_report(obs, pred);
    std::vector<double> rmses;
    for (std::size_t i = 0; i < obs.size(); ++i) rmses.push_back(oracle::rmse(obs[i], pred[i]));
    double mean = 0.0;
    for (double v : rmses) mean += v / static_cast<double>(rmses.size());
    CHECK(r.rmse.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(r.rmse.q25 == doctest::Approx(oracle::percentile(rmses, 25)).epsilon(1e-12));
    CHECK(r.rmse.q75 == doctest::Approx(oracle::percentile(rmses, 75)).epsilon(1e-12));
    CHECK(r.rmse.count == 11);
  }
}

TEST_SUITE("extremes") {
  TEST_CASE("identity at every threshold") {
    const LocationSeries obs = locations(4, 3000, 11);
    for (const EvalReport& r : extreme_sweep(obs, obs, kDefaultThresholds, 1)) {
      CHECK(r.rmse.mean == 0.0);
      CHECK(r.corr.mean == doctest::Approx(1.0));
    }
  }

  TEST_CASE("doubled predictions have bias equal to the selected mean") {
    const LocationSeries obs = locations(6, 2000, 12);
    LocationSeries pred = obs;
    for (auto& s : pred)
      for (double& v : s) v *= 2.0;
    const auto reports = extreme_sweep(obs, pred, kDefaultThresholds, 1);
    REQUIRE(reports.size() == kDefaultThresholds.size());
    std::size_t previous = SIZE_MAX;
    for (std::size_t t = 0; t < reports.size(); ++t) {
      const double p = kDefaultThresholds[t];
      double bias_sum = 0.0;
      std::size_t events = 0, used = 0;
      for (std::size_t i = 0; i < obs.size(); ++i) {
        const double cut = oracle::percentile(obs[i], p);
        double s = 0.0;
        std::size_t n = 0;
        for (double v : obs[i])
          if (v > cut) {
            s += v;
            ++n;
          }
        events += n;
        if (n == 0) continue;
        bias_sum += s / static_cast<double>(n);
        ++used;
      }
      CHECK(std::abs(reports[t].bias.mean - bias_sum / static_cast<double>(used)) <= 1e-10);
      CHECK(reports[t].events == events);
      CHECK(events <= previous);
      previous = events;
    }
  }

  TEST_CASE("sparse locations are dropped and empty selections rejected") {
    const LocationSeries obs = locations(3, 300, 13);
    const auto reports = extreme_sweep(obs, obs, {90.0, 99.9}, 20);
    CHECK(reports[0].dropped == 0);
    CHECK(reports[1].dropped == 3);
    const LocationSeries flat(2, std::vector<double>(50, 1.0));
    CHECK_THROWS_AS(extreme_sweep(flat, flat, {90.0}, 1), DataError);
  }
}

TEST_SUITE("io") {
  TEST_CASE("location sampling is seeded and distinct") {
    const auto a = sample_locations(208, 464, 200, 1);
    CHECK(a.size() == 200);
    CHECK(a == sample_locations(208, 464, 200, 1));
    CHECK(a != sample_locations(208, 464, 200, 2));
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& c : a) {
      CHECK(c.row < 208);
      CHECK(c.col < 464);
      seen.insert({c.row, c.col});
    }
    CHECK(seen.size() == 200);
    CHECK_THROWS(sample_locations(2, 2, 5, 0));
  }

  TEST_CASE("location files round trip") {
    test::TempDir dir("locations");
    const auto cells = sample_locations(50, 60, 12, 3);
    write_locations(cells, dir / "l.txt");
    CHECK(read_locations(dir / "l.txt") == cells);
    std::ofstream(dir / "c.txt") << "# header\n3 4\n\n5 6\n";
    CHECK(read_locations(dir / "c.txt") == std::vector<CellIndex>{{3, 4}, {5, 6}});
    std::ofstream(dir / "bad.txt") << "3 x\n";
    CHECK_THROWS_AS(read_locations(dir / "bad.txt"), ParseError);
  }

  TEST_CASE("extraction and rmse map") {
    const GridSeries obs = test::random_series(20, 6, 7, 14);
    GridSeries pred = obs;
    for (auto& d : pred.days) d(2, 3) += 1.5;
    const auto ls = extract_locations(obs, {{2, 3}, {5, 6}});
    REQUIRE(ls.size() == 2);
    for (std::size_t d = 0; d < 20; ++d) CHECK(ls[1][d] == obs.days[d](5, 6));
    const GeoGrid map = rmse_map(obs, pred);
    CHECK(map(2, 3) == doctest::Approx(1.5));
    CHECK(map(0, 0) == 0.0);
  }

  TEST_CASE("report csv") {
    const LocationSeries obs = locations(4, 100, 15);
    std::vector<EvalReport> reports{overall_report(obs, perturbed(obs, 16))};
    const auto dates = consecutive_dates(std::chrono::year{2001} / 6 / 1, 100);
    for (auto& r : seasonal_report(obs, obs, dates)) reports.push_back(std::move(r));
    std::istringstream csv(report_csv(reports));
    std::string line;
    std::getline(csv, line);
    CHECK(line ==
          "scope,season_or_threshold,bias,corr,rmse,skill,q25_bias,q25_corr,q25_rmse,q25_skill,"
          "q75_bias,q75_corr,q75_rmse,q75_skill");
    std::vector<std::string> rows;
    while (std::getline(csv, line)) rows.push_back(line);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].rfind("all,", 0) == 0);
    CHECK(rows[1].rfind("season,DJF,NA", 0) == 0);
    CHECK(rows[3].rfind("season,JJA,", 0) == 0);
  }
}
