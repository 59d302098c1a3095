#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "deepsd/bcsd.hpp"
#include "deepsd/errors.hpp"
#include "deepsd/raster_io.hpp"
#include "deepsd/synth_data.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace deepsd;

namespace {

GridSeries synthetic_year(std::uint64_t seed, std::size_t days = 365) {
  SynthConfig cfg;
  cfg.rows = 32;
  cfg.cols = 48;
  cfg.days = days;
  cfg.seed = seed;
  cfg.correlation_length = 3.0;
  return gen_precip_series(gen_elevation(cfg), cfg);
}

GridSeries coarsen_series(const GridSeries& s, int factor) {
  return map_series(s, [&](const GeoGrid& g, std::size_t) { return coarsen(g, factor); });
}

BcsdOptions opts(int factor) {
  BcsdOptions o;
  o.factor = factor;
  return o;
}

}  // namespace

TEST_SUITE("fit") {
  TEST_CASE("spatially constant days give unit factors") {
    GridSeries s = test::random_series(365, 16, 16, 1);
    for (auto& d : s.days) {
      const double v = d(0, 0) + 0.5;
      for (double& x : d.values()) x = v;
    }
    const BcsdModel m = fit_bcsd(s, opts(4));
    for (const auto& f : m.factors)
      for (double v : f.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("a cell that is always dry in a month gets factor 0") {
    GridSeries s = test::random_series(365, 16, 16, 2);
    for (std::size_t d = 0; d < s.size(); ++d)
      if (month_of(s.dates[d]) == 7) s.days[d](5, 9) = 0.0;
    const BcsdModel m = fit_bcsd(s, opts(4));
    CHECK(m.factors_for(7)(5, 9) == 0.0);
    CHECK(m.factors_for(6)(5, 9) > 0.0);
  }

  TEST_CASE("factors match the two-pass oracle") {
    for (int factor : {2, 4, 8}) {
      const GridSeries s = synthetic_year(3 + static_cast<std::uint64_t>(factor));
      const BcsdModel m = fit_bcsd(s, opts(factor));
      const auto expected = oracle::bcsd_factors(s, opts(factor));
      for (std::size_t month = 0; month < 12; ++month) {
        const auto got = m.factors[month].values();
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - expected[month][i]) <= 1e-10);
        for (double v : got) {
          CHECK(v >= 0.0);
          CHECK(v <= 10.0);
        }
      }
      CHECK(m.lr_template.rows() == s.days[0].rows() / static_cast<std::size_t>(factor));
      CHECK(m.training_period == "1980-01-01/1980-12-30");
    }
  }

  TEST_CASE("a missing calendar month is rejected") {
    const GridSeries s = test::random_series(200, 16, 16, 4);
    CHECK_THROWS_AS(fit_bcsd(s, opts(4)), DataError);
  }

  TEST_CASE("non-divisible lattices are rejected") {
    CHECK_THROWS_AS(fit_bcsd(test::random_series(365, 18, 16, 5), opts(4)), DimensionError);
  }
}

TEST_SUITE("downscale") {
  TEST_CASE("unit factors reproduce bicubic upsampling") {
    const GridSeries s = test::random_series(365, 16, 24, 6);
    BcsdModel m = fit_bcsd(s, opts(4));
    for (auto& f : m.factors)
      for (double& v : f.values()) v = 1.0;
    const GeoGrid lr = coarsen(s.days[40], 4);
    GeoGrid expected = bicubic_upsample(lr, 4);
    for (double& v : expected.values()) v = std::max(v, 0.0);
    CHECK(downscale_bcsd_day(m, lr, 2) == expected);
  }

  TEST_CASE("dry days stay dry and outputs are non-negative") {
    const GridSeries s = synthetic_year(7);
    const BcsdModel m = fit_bcsd(s, opts(4));
    const GeoGrid zero(8, 12, m.lr_template.ref(), 0.0);
    const GeoGrid dry = downscale_bcsd_day(m, zero, 5);
    for (double v : dry.values()) CHECK(v == 0.0);
    const GridSeries out = downscale_bcsd(m, coarsen_series(s, 4));
    for (const auto& d : out.days)
      for (double v : d.values()) CHECK(v >= 0.0);
  }

  TEST_CASE("training climatology is reproduced where nothing binds") {
    const GridSeries s = test::random_series(365, 32, 48, 8);
    const BcsdOptions o = opts(4);
    const BcsdModel m = fit_bcsd(s, o);
    const GridSeries lr = coarsen_series(s, 4);
    const GridSeries out = downscale_bcsd(m, lr, 2);
    CHECK(out.dates == s.dates);
    std::size_t checked = 0;
    for (unsigned month = 1; month <= 12; ++month) {
      std::vector<std::size_t> days;
      for (std::size_t d = 0; d < s.size(); ++d)
        if (month_of(s.dates[d]) == month) days.push_back(d);
      std::vector<GeoGrid> interp;
      for (std::size_t d : days) interp.push_back(bicubic_upsample(lr.days[d], 4));
      for (std::size_t i = 0; i < s.days[0].size(); ++i) {
        double obs = 0.0, den = 0.0, pred = 0.0;
        bool clamped = false;
        for (std::size_t k = 0; k < days.size(); ++k) {
          obs += s.days[days[k]].values()[i];
          den += interp[k].values()[i];
          pred += out.days[days[k]].values()[i];
          clamped = clamped || interp[k].values()[i] < 0.0;
        }
        const double n = static_cast<double>(days.size());
        const double f = m.factors_for(month).values()[i];
        if (clamped || den / n <= o.denominator_floor || f >= o.factor_cap) continue;
        CHECK(std::abs(pred / n - obs / n) <= 1e-9);
        ++checked;
      }
    }
    CHECK(checked > s.days[0].size() * 6);
  }

  TEST_CASE("monotone in the interpolated value within a month") {
    const GridSeries s = synthetic_year(9);
    const BcsdModel m = fit_bcsd(s, opts(4));
    const GeoGrid lo = test::random_grid(8, 12, 10, 0.0, 5.0, m.lr_template.ref());
    GeoGrid hi = lo;
    for (double& v : hi.values()) v *= 1.5;
    const GeoGrid a = downscale_bcsd_day(m, lo, 4), b = downscale_bcsd_day(m, hi, 4);
    const GeoGrid ia = bicubic_upsample(lo, 4), ib = bicubic_upsample(hi, 4);
    for (std::size_t i = 0; i < a.size(); ++i)
      if (ib.values()[i] > ia.values()[i]) CHECK(b.values()[i] >= a.values()[i]);
  }

  TEST_CASE("a lattice mismatch is rejected") {
    const BcsdModel m = fit_bcsd(test::random_series(365, 16, 16, 11), opts(4));
    CHECK_THROWS_AS(downscale_bcsd_day(m, GeoGrid(4, 5, m.lr_template.ref()), 1), DataError);
    GeoRef moved = m.lr_template.ref();
    moved.lon0 += 3.0;
    CHECK_THROWS_AS(downscale_bcsd_day(m, GeoGrid(4, 4, moved), 1), DataError);
  }
}

TEST_SUITE("persistence") {
  TEST_CASE("save and load keep factors to f32 precision") {
    test::TempDir dir("bcsd");
    const BcsdModel m = fit_bcsd(synthetic_year(12), opts(4));
    save_bcsd(m, dir.path());
    const BcsdModel back = load_bcsd(dir.path());
    CHECK(back.options.factor == 4);
    CHECK(back.options.factor_cap == m.options.factor_cap);
    CHECK(back.training_period == m.training_period);
    CHECK(back.lr_template.ref().matches(m.lr_template.ref()));
    for (std::size_t k = 0; k < 12; ++k)
      for (std::size_t i = 0; i < m.factors[k].size(); ++i)
        CHECK(back.factors[k].values()[i] == static_cast<double>(static_cast<float>(m.factors[k].values()[i])));
    save_bcsd(back, dir / "again");
    CHECK(read_file_bytes(dir / "again" / "factors_03.grd") == read_file_bytes(dir / "factors_03.grd"));
    CHECK_THROWS(load_bcsd(dir / "missing"));
  }
}
