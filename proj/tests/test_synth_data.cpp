#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deepsd/errors.hpp"
#include "deepsd/synth_data.hpp"
#include "oracles.hpp"

using namespace deepsd;

namespace {

SynthConfig small(std::uint64_t seed, std::size_t days = 40) {
  SynthConfig c;
  c.rows = 64;
  c.cols = 96;
  c.days = days;
  c.seed = seed;
  c.correlation_length = 4.0;
  return c;
}

// Mean lag-k autocorrelation along rows and columns.
double autocorrelation(const GeoGrid& g, std::size_t lag) {
  const double mean = g.mean();
  double var = 0.0;
  for (double v : g.values()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(g.size());
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c + lag < g.cols(); ++c, ++n) s += (g(r, c) - mean) * (g(r, c + lag) - mean);
  for (std::size_t r = 0; r + lag < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c, ++n) s += (g(r, c) - mean) * (g(r + lag, c) - mean);
  return s / static_cast<double>(n) / var;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

}  // namespace

TEST_SUITE("elevation") {
  TEST_CASE("seeded, bounded and spatially correlated") {
    const GeoGrid a = gen_elevation(small(1));
    CHECK(a == gen_elevation(small(1)));
    CHECK_FALSE(a == gen_elevation(small(2)));
    CHECK(a.min() == 0.0);
    CHECK(a.max() == 3000.0);
    CHECK(autocorrelation(a, 1) > autocorrelation(a, 10));
    CHECK(a.rows() == 64);
    CHECK(a.ref().dlat == 0.125);
  }

  TEST_CASE("default lattice is the CONUS grid") {
    const SynthConfig c;
    CHECK(c.rows == 208);
    CHECK(c.cols == 464);
    SynthConfig bad = small(0);
    bad.rows = 60;
    CHECK_THROWS_AS(bad.validate(), DimensionError);
    bad = small(0, 0);
    CHECK_THROWS(bad.validate());
  }
}

TEST_SUITE("precipitation") {
  TEST_CASE("deterministic and thread independent") {
    const SynthConfig c = small(3, 12);
    const GeoGrid e = gen_elevation(c);
    const GridSeries a = gen_precip_series(e, c, 1);
    const GridSeries b = gen_precip_series(e, c, 3);
    CHECK(a.days == b.days);
    CHECK(a.dates.front() == std::chrono::year{1980} / 1 / 1);
    CHECK(a.size() == 12);
    SynthConfig other = c;
    other.seed = 4;
    CHECK_FALSE(gen_precip_series(e, other).days == a.days);
  }

  TEST_CASE("day streams do not depend on the series length") {
    const SynthConfig c = small(5, 10);
    const GeoGrid e = gen_elevation(c);
    SynthConfig longer = c;
    longer.days = 20;
    const GridSeries a = gen_precip_series(e, c), b = gen_precip_series(e, longer);
    for (std::size_t d = 0; d < 10; ++d) CHECK(a.days[d] == b.days[d]);
  }

  TEST_CASE("non-negative with the configured dry fraction") {
    for (double f : {0.2, 0.3, 0.5}) {
      SynthConfig c = small(6, 60);
      c.rain_fraction = f;
      const GridSeries s = gen_precip_series(gen_elevation(c), c);
      double zeros = 0.0, total = 0.0;
      for (const auto& d : s.days)
        for (double v : d.values()) {
          CHECK(v >= 0.0);
          zeros += v == 0.0 ? 1.0 : 0.0;
          total += 1.0;
        }
      CHECK(std::abs(zeros / total - (1.0 - f)) <= 0.1);
    }
  }

  TEST_CASE("no coupling means no elevation signal") {
    SynthConfig c = small(7, 200);
    c.coupling = 0.0;
    const GeoGrid e = gen_elevation(c);
    const GridSeries s = gen_precip_series(e, c);
    Rng rng(8);
    std::vector<double> p, z;
    for (int k = 0; k < 2000; ++k) {
      const std::size_t d = rng.below(s.size()), r = rng.below(c.rows), col = rng.below(c.cols);
      p.push_back(s.days[d](r, col));
      z.push_back(e(r, col));
    }
    CHECK(std::abs(oracle::pearson(p, z)) < 0.05);
  }

  TEST_CASE("strong coupling gives a positive rank correlation on wet cells") {
    SynthConfig c = small(9, 60);
    c.coupling = 2.0;
    const GeoGrid e = gen_elevation(c);
    const GridSeries s = gen_precip_series(e, c);
    std::vector<double> p, z;
    for (const auto& d : s.days)
      for (std::size_t i = 0; i < d.size(); ++i)
        if (d.values()[i] > 0.0) {
          p.push_back(d.values()[i]);
          z.push_back(e.values()[i]);
        }
    CHECK(oracle::pearson(ranks(p), ranks(z)) > 0.0);
  }

  TEST_CASE("elevation lattice must match") {
    const SynthConfig c = small(10, 2);
    CHECK_THROWS_AS(gen_precip_series(GeoGrid(8, 8), c), DimensionError);
  }
}

TEST_SUITE("split") {
  TEST_CASE("chronological prefix and suffix") {
    const SynthConfig c = small(11, 100);
    const GridSeries s = gen_precip_series(gen_elevation(c), c);
    const auto [train, test] = split_train_test(s, 0.8);
    CHECK(train.size() == 80);
    CHECK(test.size() == 20);
    CHECK(train.dates.back() < test.dates.front());
    for (std::size_t d = 0; d < 80; ++d) CHECK(train.days[d] == s.days[d]);
    for (std::size_t d = 0; d < 20; ++d) CHECK(test.days[d] == s.days[80 + d]);
    CHECK(test.dates.back() == s.dates.back());
  }

  TEST_CASE("degenerate fractions are rejected") {
    const SynthConfig c = small(12, 10);
    const GridSeries s = gen_precip_series(gen_elevation(c), c);
    CHECK_THROWS(split_train_test(s, 0.0));
    CHECK_THROWS(split_train_test(s, 1.0));
    CHECK_THROWS(split_train_test(s, 0.01));
    CHECK(split_train_test(s, 0.5).first.size() == 5);
  }
}

TEST_SUITE("helpers") {
  TEST_CASE("normal quantile") {
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(normal_quantile(0.001) == doctest::Approx(-3.090232306167814).epsilon(1e-12));
    for (double p : {0.01, 0.2, 0.7, 0.99}) {
      const double x = normal_quantile(p);
      CHECK(0.5 * std::erfc(-x / std::sqrt(2.0)) == doctest::Approx(p).epsilon(1e-13));
    }
  }

  TEST_CASE("gaussian blur keeps constants and the mean of a delta") {
    const GeoGrid flat(20, 30, {}, 2.5);
    const GeoGrid b = gaussian_blur(flat, 3.0);
    for (double v : b.values()) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));
    GeoGrid delta(41, 41);
    delta(20, 20) = 1.0;
    const GeoGrid d = gaussian_blur(delta, 2.0);
    double sum = 0.0;
    for (double v : d.values()) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d(20, 22) == doctest::Approx(d(22, 20)).epsilon(1e-14));
    CHECK(d(20, 20) > d(20, 21));
  }
}
