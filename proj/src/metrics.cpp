#include "pmfuse/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "pmfuse/errors.hpp"
#include "pmfuse/util.hpp"

namespace pmfuse::metrics {

void PairedSeries::validate() const {
    if (y.size() != y_hat.size())
        throw ValidationError("paired series length mismatch");
    if (y.size() < 2)
        throw ValidationError("paired series needs at least 2 samples");
    for (std::size_t i = 0; i < y.size(); ++i)
        if (!std::isfinite(y[i]) || !std::isfinite(y_hat[i]))
            throw ValidationError("non-finite value in paired series");
}

namespace {

double mean_of(const std::vector<double>& v) {
    KahanSum s;
    for (double x : v) s.add(x);
    return s.value() / static_cast<double>(v.size());
}

}  // namespace

double pearson_r(const PairedSeries& s) {
    s.validate();
    const std::size_t n = s.y.size();
    double my = mean_of(s.y), mh = mean_of(s.y_hat);
    KahanSum sxy, sxx, syy;
    for (std::size_t i = 0; i < n; ++i) {
        double dy = s.y[i] - my;
        double dh = s.y_hat[i] - mh;
        sxy.add(dy * dh);
        sxx.add(dy * dy);
        syy.add(dh * dh);
    }
    double vx = sxx.value(), vy = syy.value();
    if (vx <= 0.0 || vy <= 0.0)
        throw UndefinedStatisticError("pearson_r: zero variance series");
    double r = sxy.value() / (std::sqrt(vx) * std::sqrt(vy));
    // Rounding can push |r| a hair past 1 on perfectly correlated input.
    if (r > 1.0) r = 1.0;
    if (r < -1.0) r = -1.0;
    return r;
}

double r_squared(const PairedSeries& s) {
    s.validate();
    double my = mean_of(s.y);
    KahanSum ss_res, ss_tot;
    for (std::size_t i = 0; i < s.y.size(); ++i) {
        double e = s.y[i] - s.y_hat[i];
        double d = s.y[i] - my;
        ss_res.add(e * e);
        ss_tot.add(d * d);
    }
    if (ss_tot.value() <= 0.0)
        throw UndefinedStatisticError("r_squared: zero variance in reference");
    return 1.0 - ss_res.value() / ss_tot.value();
}

double mae(const PairedSeries& s) {
    s.validate();
    KahanSum sum;
    for (std::size_t i = 0; i < s.y.size(); ++i)
        sum.add(std::abs(s.y[i] - s.y_hat[i]));
    return sum.value() / static_cast<double>(s.y.size());
}

double rmse(const PairedSeries& s) {
    s.validate();
    KahanSum sum;
    for (std::size_t i = 0; i < s.y.size(); ++i) {
        double e = s.y[i] - s.y_hat[i];
        sum.add(e * e);
    }
    return std::sqrt(sum.value() / static_cast<double>(s.y.size()));
}

MapeResult mape(const PairedSeries& s) {
    s.validate();
    KahanSum sum;
    std::size_t used = 0, excluded = 0;
    for (std::size_t i = 0; i < s.y.size(); ++i) {
        if (s.y[i] == 0.0) {
            ++excluded;
            continue;
        }
        sum.add(std::abs(s.y[i] - s.y_hat[i]) / std::abs(s.y[i]));
        ++used;
    }
    if (used == 0)
        throw UndefinedStatisticError("mape: all reference values are zero");
    return MapeResult{sum.value() / static_cast<double>(used), excluded};
}

MetricReport compute_report(const PairedSeries& s, const std::string& context) {
    MetricReport rep;
    rep.context = context;
    rep.n = s.y.size();
    rep.r = pearson_r(s);
    rep.r2 = r_squared(s);
    rep.mae = mae(s);
    rep.rmse = rmse(s);
    MapeResult m = mape(s);
    rep.mape = m.value;
    rep.mape_excluded = m.excluded;
    return rep;
}

std::string MetricReport::csv_header() { return "context,n,r,r2,mae,rmse,mape"; }

std::string MetricReport::csv_row() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%zu,%.6f,%.6f,%.6f,%.6f,%.6f",
                  context.c_str(), n, r, r2, mae, rmse, mape);
    return buf;
}

AdjacentVariation adjacent_variation(const std::vector<CellField>& slices) {
    if (slices.size() < 2)
        throw ValidationError("adjacent_variation needs at least 2 slices");
    const auto& first = slices.front();
    for (const auto& f : slices)
        if (f.n_cols != first.n_cols || f.n_rows != first.n_rows)
            throw ValidationError("adjacent_variation: slices on different grids");

    std::vector<double> step_means;
    std::size_t skipped = 0;
    for (std::size_t t = 0; t + 1 < slices.size(); ++t) {
        const auto& a = slices[t];
        const auto& b = slices[t + 1];
        KahanSum sum;
        std::size_t count = 0;
        for (std::size_t i = 0; i < a.values.size(); ++i) {
            if (!a.present[i] || !b.present[i]) continue;
            if (!(a.values[i] > 0.0)) continue;
            sum.add(std::abs(b.values[i] - a.values[i]) / a.values[i] * 100.0);
            ++count;
        }
        if (count == 0) {
            ++skipped;
            continue;
        }
        step_means.push_back(sum.value() / static_cast<double>(count));
    }
    if (step_means.empty())
        throw UndefinedStatisticError("adjacent_variation: no valid step");

    KahanSum ms;
    for (double v : step_means) ms.add(v);
    double mean = ms.value() / static_cast<double>(step_means.size());
    KahanSum vs;
    for (double v : step_means) vs.add((v - mean) * (v - mean));
    double var = vs.value() / static_cast<double>(step_means.size());  // population
    AdjacentVariation out;
    out.mean_pct = mean;
    out.std_pct = std::sqrt(var);
    out.steps_used = step_means.size();
    out.steps_skipped = skipped;
    return out;
}

double morans_i(const CellField& field) {
    const std::int32_t nc = field.n_cols, nr = field.n_rows;
    if (field.values.size() != static_cast<std::size_t>(nc) * nr ||
        field.present.size() != field.values.size())
        throw ValidationError("morans_i: field size mismatch");

    std::vector<std::size_t> cells;
    for (std::size_t i = 0; i < field.values.size(); ++i)
        if (field.present[i]) cells.push_back(i);
    const std::size_t n = cells.size();
    if (n < 9)
        throw ValidationError("morans_i: needs at least 9 cells with values");

    KahanSum msum;
    for (std::size_t i : cells) msum.add(field.values[i]);
    double mean = msum.value() / static_cast<double>(n);

    std::vector<double> z(field.values.size(), 0.0);
    KahanSum zz;
    for (std::size_t i : cells) {
        z[i] = field.values[i] - mean;
        zz.add(z[i] * z[i]);
    }
    if (zz.value() <= 0.0)
        throw UndefinedStatisticError("morans_i: zero variance field");

    // Rook neighbors among present cells, rows standardized to sum 1.
    auto present_at = [&](std::int32_t c, std::int32_t r) -> bool {
        if (c < 0 || r < 0 || c >= nc || r >= nr) return false;
        return field.present[static_cast<std::size_t>(r) * nc + c] != 0;
    };
    KahanSum num, w_sum;
    for (std::size_t i : cells) {
        std::int32_t col = static_cast<std::int32_t>(i % nc);
        std::int32_t row = static_cast<std::int32_t>(i / nc);
        const std::int32_t dc[4] = {1, -1, 0, 0};
        const std::int32_t dr[4] = {0, 0, 1, -1};
        int deg = 0;
        double nz = 0.0;
        for (int k = 0; k < 4; ++k) {
            std::int32_t c2 = col + dc[k], r2 = row + dr[k];
            if (!present_at(c2, r2)) continue;
            ++deg;
            nz += z[static_cast<std::size_t>(r2) * nc + c2];
        }
        if (deg == 0) continue;  // isolated cell: empty weight row
        double w = 1.0 / deg;
        num.add(z[i] * w * nz);
        w_sum.add(1.0);  // row sums to exactly 1
    }
    if (w_sum.value() <= 0.0)
        throw UndefinedStatisticError("morans_i: no contiguity edges");

    return (static_cast<double>(n) / w_sum.value()) * (num.value() / zz.value());
}

}  // namespace pmfuse::metrics
