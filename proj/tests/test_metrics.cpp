#include <doctest.h>

#include <cmath>
#include <vector>

#include "pmfuse/errors.hpp"
#include "pmfuse/metrics.hpp"
#include "pmfuse/rng.hpp"

using namespace pmfuse;
using namespace pmfuse::metrics;

// ---- independent brute-force oracles (plain single-pass arithmetic) -------

namespace {

double oracle_pearson(const std::vector<double>& y, const std::vector<double>& h) {
    double my = 0, mh = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        my += y[i];
        mh += h[i];
    }
    my /= y.size();
    mh /= h.size();
    double num = 0, dy2 = 0, dh2 = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        num += (y[i] - my) * (h[i] - mh);
        dy2 += (y[i] - my) * (y[i] - my);
        dh2 += (h[i] - mh) * (h[i] - mh);
    }
    return num / (std::sqrt(dy2) * std::sqrt(dh2));
}

double oracle_r2(const std::vector<double>& y, const std::vector<double>& h) {
    double my = 0;
    for (double v : y) my += v;
    my /= y.size();
    double res = 0, tot = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        res += (y[i] - h[i]) * (y[i] - h[i]);
        tot += (y[i] - my) * (y[i] - my);
    }
    return 1.0 - res / tot;
}

double oracle_mae(const std::vector<double>& y, const std::vector<double>& h) {
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - h[i]);
    return s / y.size();
}

double oracle_rmse(const std::vector<double>& y, const std::vector<double>& h) {
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - h[i]) * (y[i] - h[i]);
    return std::sqrt(s / y.size());
}

double oracle_mape(const std::vector<double>& y, const std::vector<double>& h) {
    double s = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0) continue;
        s += std::abs((y[i] - h[i]) / y[i]);
        ++n;
    }
    return s / static_cast<double>(n);
}

// Full-matrix Moran's I with explicit rook weight rows, row-standardized.
double oracle_morans(const CellField& f) {
    std::vector<std::size_t> cells;
    for (std::size_t i = 0; i < f.values.size(); ++i)
        if (f.present[i]) cells.push_back(i);
    const std::size_t n = cells.size();
    double mean = 0;
    for (std::size_t i : cells) mean += f.values[i];
    mean /= static_cast<double>(n);

    auto pos = [&](std::size_t idx) {
        return std::pair<int, int>(static_cast<int>(idx % f.n_cols),
                                   static_cast<int>(idx / f.n_cols));
    };
    std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
    for (std::size_t a = 0; a < n; ++a) {
        auto [ca, ra] = pos(cells[a]);
        double row_sum = 0;
        for (std::size_t b = 0; b < n; ++b) {
            auto [cb, rb] = pos(cells[b]);
            if (std::abs(ca - cb) + std::abs(ra - rb) == 1) {
                w[a][b] = 1.0;
                row_sum += 1.0;
            }
        }
        if (row_sum > 0)
            for (std::size_t b = 0; b < n; ++b) w[a][b] /= row_sum;
    }
    double s0 = 0, num = 0, den = 0;
    for (std::size_t a = 0; a < n; ++a) {
        double za = f.values[cells[a]] - mean;
        den += za * za;
        for (std::size_t b = 0; b < n; ++b) {
            s0 += w[a][b];
            num += w[a][b] * za * (f.values[cells[b]] - mean);
        }
    }
    return (static_cast<double>(n) / s0) * (num / den);
}

PairedSeries mk(std::vector<double> y, std::vector<double> h) {
    return PairedSeries{std::move(y), std::move(h)};
}

}  // namespace

TEST_CASE("pearson_r frozen examples") {
    CHECK(pearson_r(mk({1, 2, 3}, {1, 2, 3})) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson_r(mk({1, 2, 3}, {3, 2, 1})) == doctest::Approx(-1.0).epsilon(1e-12));
    // Hand evaluation of the product-moment formula: 4/5.
    CHECK(pearson_r(mk({1, 2, 3, 4}, {1, 3, 2, 4})) ==
          doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("pearson_r zero variance is undefined") {
    CHECK_THROWS_AS(pearson_r(mk({1, 1, 1}, {1, 2, 3})), UndefinedStatisticError);
    CHECK_THROWS_AS(pearson_r(mk({1, 2, 3}, {5, 5, 5})), UndefinedStatisticError);
}

TEST_CASE("r_squared frozen examples") {
    CHECK(r_squared(mk({1, 2, 3}, {1, 2, 3})) == doctest::Approx(1.0));
    CHECK(r_squared(mk({1, 2, 3}, {2, 2, 2})) == doctest::Approx(0.0));
    // SS_res = 2, SS_tot = 2.
    CHECK(r_squared(mk({0, 2}, {1, 1})) == doctest::Approx(0.0));
}

TEST_CASE("mae / rmse frozen examples") {
    CHECK(mae(mk({1, 2}, {1, 2})) == 0.0);
    CHECK(mae(mk({1, 2}, {2, 4})) == doctest::Approx(1.5));
    CHECK(mae(mk({10, 10}, {7, 7})) == doctest::Approx(3.0));
    CHECK(rmse(mk({0, 0}, {3, 4})) == doctest::Approx(std::sqrt(12.5)));
}

TEST_CASE("mape zero-target exclusion") {
    CHECK(mape(mk({100, 100}, {90, 90})).value == doctest::Approx(0.10));
    MapeResult r = mape(mk({0, 50}, {5, 60}));
    CHECK(r.value == doctest::Approx(0.20));
    CHECK(r.excluded == 1);
    CHECK_THROWS_AS(mape(mk({0, 0}, {1, 2})), UndefinedStatisticError);
}

TEST_CASE("metrics agree with brute-force formulas on random series") {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 2 + static_cast<std::size_t>(rng.next_below(200));
        std::vector<double> y(n), h(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.uniform(0.1, 120.0);
            h[i] = y[i] * rng.uniform(0.5, 1.5) + rng.uniform(-5.0, 5.0);
        }
        PairedSeries s = mk(y, h);
        CHECK(pearson_r(s) == doctest::Approx(oracle_pearson(y, h)).epsilon(1e-9));
        CHECK(r_squared(s) == doctest::Approx(oracle_r2(y, h)).epsilon(1e-9));
        CHECK(mae(s) == doctest::Approx(oracle_mae(y, h)).epsilon(1e-9));
        CHECK(rmse(s) == doctest::Approx(oracle_rmse(y, h)).epsilon(1e-9));
        CHECK(mape(s).value == doctest::Approx(oracle_mape(y, h)).epsilon(1e-9));
        CHECK(rmse(s) >= mae(s));
        CHECK(r_squared(s) <= 1.0);
    }
}

TEST_CASE("pearson_r affine invariance up to sign") {
    Rng rng(5);
    std::vector<double> y(50), h(50);
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = rng.uniform(0, 100);
        h[i] = rng.uniform(0, 100);
    }
    double base = pearson_r(mk(y, h));
    std::vector<double> y2(y.size()), y3(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y2[i] = 2.5 * y[i] + 7.0;
        y3[i] = -1.25 * y[i] + 3.0;
    }
    CHECK(pearson_r(mk(y2, h)) == doctest::Approx(base).epsilon(1e-9));
    CHECK(pearson_r(mk(y3, h)) == doctest::Approx(-base).epsilon(1e-9));
}

namespace {

CellField field_from(std::int32_t n_cols, std::int32_t n_rows,
                     const std::vector<double>& values) {
    CellField f;
    f.n_cols = n_cols;
    f.n_rows = n_rows;
    f.values = values;
    f.present.assign(values.size(), 1);
    return f;
}

}  // namespace

TEST_CASE("adjacent_variation basics") {
    CellField a = field_from(2, 2, {10, 20, 30, 40});
    CellField b = field_from(2, 2, {20, 40, 60, 80});
    SUBCASE("identical slices") {
        auto v = adjacent_variation({a, a, a});
        CHECK(v.mean_pct == 0.0);
        CHECK(v.std_pct == 0.0);
    }
    SUBCASE("doubling slice") {
        auto v = adjacent_variation({a, b});
        CHECK(v.mean_pct == doctest::Approx(100.0));
        CHECK(v.std_pct == 0.0);
    }
    SUBCASE("three hand-set slices against direct evaluation") {
        CellField c = field_from(2, 2, {15, 50, 45, 100});
        // step a->b: each cell +100%. step b->c: |15-20|/20, |50-40|/40,
        // |45-60|/60, |100-80|/80 -> 25%, 25%, 25%, 25%.
        auto v = adjacent_variation({a, b, c});
        double s1 = 100.0, s2 = 25.0;
        double mean = (s1 + s2) / 2.0;
        double stdev = std::sqrt(((s1 - mean) * (s1 - mean) +
                                  (s2 - mean) * (s2 - mean)) / 2.0);
        CHECK(v.mean_pct == doctest::Approx(mean).epsilon(1e-12));
        CHECK(v.std_pct == doctest::Approx(stdev).epsilon(1e-12));
        CHECK(v.steps_used == 2);
    }
}

TEST_CASE("adjacent_variation scale invariance") {
    Rng rng(11);
    std::vector<CellField> slices;
    for (int t = 0; t < 4; ++t) {
        std::vector<double> v(9);
        for (auto& x : v) x = rng.uniform(5.0, 80.0);
        slices.push_back(field_from(3, 3, v));
    }
    auto base = adjacent_variation(slices);
    std::vector<CellField> scaled = slices;
    for (auto& f : scaled)
        for (auto& x : f.values) x *= 7.25;
    auto after = adjacent_variation(scaled);
    CHECK(after.mean_pct == doctest::Approx(base.mean_pct).epsilon(1e-9));
    CHECK(after.std_pct == doctest::Approx(base.std_pct).epsilon(1e-9));
}

TEST_CASE("adjacent_variation skips steps without valid pairs") {
    CellField a = field_from(2, 2, {0, 0, 0, 0});  // all zeros: no C_t > 0
    CellField b = field_from(2, 2, {10, 10, 10, 10});
    auto v = adjacent_variation({a, b, b});
    CHECK(v.steps_skipped == 1);
    CHECK(v.steps_used == 1);
    CHECK(v.mean_pct == 0.0);
}

TEST_CASE("morans_i checkerboard is exactly -1") {
    std::vector<double> v(16);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) v[r * 4 + c] = (r + c) % 2 == 0 ? 0.0 : 1.0;
    CellField f = field_from(4, 4, v);
    CHECK(morans_i(f) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(morans_i(f) == doctest::Approx(oracle_morans(f)).epsilon(1e-12));
}

TEST_CASE("morans_i two-block field is positive and matches oracle") {
    std::vector<double> v(16);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) v[r * 4 + c] = c < 2 ? 0.0 : 1.0;
    CellField f = field_from(4, 4, v);
    double i = morans_i(f);
    CHECK(i > 0.5);
    CHECK(i == doctest::Approx(oracle_morans(f)).epsilon(1e-12));
}

TEST_CASE("morans_i constant field is undefined") {
    CellField f = field_from(4, 4, std::vector<double>(16, 3.0));
    CHECK_THROWS_AS(morans_i(f), UndefinedStatisticError);
}

TEST_CASE("morans_i requires 9 cells") {
    CellField f = field_from(2, 2, {1, 2, 3, 4});
    CHECK_THROWS_AS(morans_i(f), ValidationError);
}

TEST_CASE("morans_i matches oracle on random partial fields") {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        CellField f;
        f.n_cols = 6;
        f.n_rows = 5;
        f.values.assign(30, 0.0);
        f.present.assign(30, 0);
        for (std::size_t i = 0; i < 30; ++i) {
            if (rng.next_double() < 0.25) continue;  // holes
            f.present[i] = 1;
            f.values[i] = rng.uniform(0.0, 50.0);
        }
        std::size_t n = 0;
        for (auto p : f.present) n += p;
        if (n < 9) continue;
        CHECK(morans_i(f) == doctest::Approx(oracle_morans(f)).epsilon(1e-12));
    }
}

TEST_CASE("morans_i of iid fields concentrates near -1/(n-1)") {
    Rng rng(77);
    double sum = 0;
    int trials = 200;
    for (int t = 0; t < trials; ++t) {
        std::vector<double> v(100);
        for (auto& x : v) x = rng.next_double();
        sum += morans_i(field_from(10, 10, v));
    }
    double mean = sum / trials;
    CHECK(std::abs(mean - (-1.0 / 99.0)) < 0.05);
}

TEST_CASE("metric report layout") {
    MetricReport rep = compute_report(mk({10, 20, 30}, {11, 19, 33}), "demo");
    CHECK(MetricReport::csv_header() == "context,n,r,r2,mae,rmse,mape");
    CHECK(rep.csv_row().substr(0, 7) == "demo,3,");
    CHECK(rep.rmse >= rep.mae);
}
