#include "pmfuse/maps.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "pmfuse/errors.hpp"
#include "pmfuse/util.hpp"

namespace pmfuse::maps {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kSnapDistanceM = 1.0;  // singularity guard radius

}  // namespace

const char* source_name(Source s) {
    switch (s) {
        case Source::fixed: return "fixed";
        case Source::mobile: return "mobile";
        case Source::mapped: return "mapped";
    }
    throw InternalError("unknown map source");
}

double PollutionMap::coverage() const {
    if (observed.empty()) return 0.0;
    std::size_t n = 0;
    for (auto o : observed) n += o;
    return static_cast<double>(n) / static_cast<double>(observed.size());
}

metrics::CellField PollutionMap::full_field() const {
    metrics::CellField f;
    f.n_cols = grid.n_cols;
    f.n_rows = grid.n_rows;
    f.values = values;
    f.present.assign(values.size(), 0);
    for (std::size_t i = 0; i < values.size(); ++i)
        f.present[i] = std::isfinite(values[i]) ? 1 : 0;
    return f;
}

metrics::CellField PollutionMap::observed_field() const {
    metrics::CellField f;
    f.n_cols = grid.n_cols;
    f.n_rows = grid.n_rows;
    f.values = observed_values;
    f.present = observed;
    return f;
}

std::string PollutionMap::csv() const {
    std::ostringstream ss;
    ss << "col,row,pm25\n";
    char buf[64];
    for (std::int32_t row = 0; row < grid.n_rows; ++row) {
        for (std::int32_t col = 0; col < grid.n_cols; ++col) {
            double v = values[grid.index_of(geo::CellKey{col, row})];
            std::snprintf(buf, sizeof(buf), "%d,%d,%.6f", col, row, v);
            ss << buf << '\n';
        }
    }
    return ss.str();
}

std::string PollutionMap::filename(Source source, std::int64_t interval_start,
                                   std::int64_t interval_len) {
    return std::string("map_") + source_name(source) + "_" +
           format_iso8601_utc(interval_start) + "_" +
           std::to_string(interval_len) + ".csv";
}

std::vector<double> idw(const std::vector<WeightedPoint>& points,
                        const geo::GridSpec& grid, const IdwConfig& cfg) {
    grid.validate();
    if (points.empty()) throw DataError("idw: no source points");
    if (!(cfg.power > 0.0)) throw ValidationError("idw power must be > 0");

    std::vector<double> out(static_cast<std::size_t>(grid.n_cells()), 0.0);
    const std::size_t np = points.size();
    const bool use_knn = cfg.k_nearest > 0 &&
                         static_cast<std::size_t>(cfg.k_nearest) < np;

    parallel_for(out.size(), cfg.threads, [&](std::size_t idx) {
        geo::ProjectedPoint c = grid.cell_center(grid.key_of(
            static_cast<std::int64_t>(idx)));
        // Snap to a source point sitting (essentially) on the cell center;
        // strictly inside the guard radius, so a point at exactly 1 m still
        // interpolates.
        double snap_best = kSnapDistanceM;
        double snap_value = kNaN;
        std::vector<std::pair<double, double>> dv;  // (distance, value)
        dv.reserve(np);
        for (const auto& p : points) {
            double d = std::hypot(p.pos.x - c.x, p.pos.y - c.y);
            if (d < snap_best) {
                snap_best = d;
                snap_value = p.value;
            }
            dv.emplace_back(d, p.value);
        }
        if (std::isfinite(snap_value)) {
            out[idx] = snap_value;
            return;
        }
        if (use_knn)
            std::partial_sort(dv.begin(), dv.begin() + cfg.k_nearest, dv.end());
        std::size_t limit = use_knn ? static_cast<std::size_t>(cfg.k_nearest) : np;
        KahanSum wsum, wvsum;
        for (std::size_t i = 0; i < limit; ++i) {
            double w = std::pow(dv[i].first, -cfg.power);
            wsum.add(w);
            wvsum.add(w * dv[i].second);
        }
        out[idx] = wvsum.value() / wsum.value();
    });
    return out;
}

namespace {

PollutionMap make_map(Source source, const geo::GridSpec& grid,
                      const align::TimeKey& time) {
    PollutionMap m;
    m.grid = grid;
    m.time = time;
    m.source = source;
    m.values.assign(static_cast<std::size_t>(grid.n_cells()), kNaN);
    m.observed.assign(m.values.size(), 0);
    m.observed_values.assign(m.values.size(), kNaN);
    return m;
}

}  // namespace

PollutionMap build_fixed_map(const std::vector<WeightedPoint>& station_values,
                             const geo::GridSpec& grid, const align::TimeKey& time,
                             const IdwConfig& cfg) {
    if (station_values.empty())
        throw DataError("fixed map: no station values for this interval");
    PollutionMap m = make_map(Source::fixed, grid, time);
    m.values = idw(station_values, grid, cfg);
    // Observed cells = cells containing a station; the raw observation is
    // the station value (mean when several stations share a cell).
    std::map<std::int64_t, std::pair<double, int>> per_cell;
    for (const auto& p : station_values) {
        auto key = geo::cell_of(p.pos, grid);
        if (!key) continue;
        auto& [sum, n] = per_cell[grid.index_of(*key)];
        sum += p.value;
        ++n;
    }
    for (const auto& [idx, acc] : per_cell) {
        m.observed[static_cast<std::size_t>(idx)] = 1;
        m.observed_values[static_cast<std::size_t>(idx)] =
            acc.first / static_cast<double>(acc.second);
    }
    return m;
}

PollutionMap build_mobile_map(const std::vector<std::pair<geo::CellKey, double>>& cell_means,
                              const geo::GridSpec& grid, const align::TimeKey& time,
                              const IdwConfig& cfg) {
    if (cell_means.empty())
        throw DataError("mobile map: no mobile cell means for this interval");
    PollutionMap m = make_map(Source::mobile, grid, time);
    std::vector<WeightedPoint> points;
    points.reserve(cell_means.size());
    for (const auto& [key, value] : cell_means) {
        points.push_back(WeightedPoint{grid.cell_center(key), value});
        m.observed[grid.index_of(key)] = 1;
        m.observed_values[grid.index_of(key)] = value;
    }
    m.values = idw(points, grid, cfg);
    return m;
}

PollutionMap build_mapped_map(const std::vector<std::pair<geo::CellKey, double>>& mapped,
                              const std::vector<WeightedPoint>& station_values,
                              const geo::GridSpec& grid, const align::TimeKey& time,
                              const IdwConfig& cfg) {
    if (mapped.empty() && station_values.empty())
        throw DataError("mapped map: no inputs for this interval");
    PollutionMap m = make_map(Source::mapped, grid, time);

    // Fixed precedence: a mapped prediction is discarded where a station's
    // containing cell coincides with the mapped cell.
    std::map<std::int64_t, std::pair<double, int>> fixed_cells;
    for (const auto& p : station_values) {
        auto key = geo::cell_of(p.pos, grid);
        if (!key) continue;
        auto& [sum, n] = fixed_cells[grid.index_of(*key)];
        sum += p.value;
        ++n;
    }
    std::vector<WeightedPoint> points;
    for (const auto& [key, value] : mapped) {
        std::int64_t idx = grid.index_of(key);
        if (fixed_cells.count(idx)) continue;
        points.push_back(WeightedPoint{grid.cell_center(key), value});
        m.observed[idx] = 1;
        m.observed_values[idx] = value;
    }
    for (const auto& p : station_values) points.push_back(p);
    for (const auto& [idx, acc] : fixed_cells) {
        m.observed[static_cast<std::size_t>(idx)] = 1;
        m.observed_values[static_cast<std::size_t>(idx)] =
            acc.first / static_cast<double>(acc.second);
    }
    m.values = idw(points, grid, cfg);
    return m;
}

std::string MapStats::csv_header() {
    return "source,interval_start,mean,std,coverage,morans_i,"
           "morans_i_observed,morans_i_interpolated";
}

std::string MapStats::csv_row() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%lld,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f",
                  source_name(source), static_cast<long long>(interval_start),
                  mean, stddev, coverage, morans_i, morans_i_observed,
                  morans_i_interpolated);
    return buf;
}

MapStats map_stats(const PollutionMap& map) {
    MapStats st;
    st.source = map.source;
    st.interval_start = map.time.interval_start;
    st.coverage = map.coverage();

    KahanSum sum;
    std::size_t n = 0;
    for (double v : map.values) {
        if (!std::isfinite(v)) continue;
        sum.add(v);
        ++n;
    }
    if (n == 0) throw DataError("map_stats: empty map");
    st.mean = sum.value() / static_cast<double>(n);
    KahanSum var;
    for (double v : map.values) {
        if (!std::isfinite(v)) continue;
        var.add((v - st.mean) * (v - st.mean));
    }
    st.stddev = std::sqrt(var.value() / static_cast<double>(n));  // population

    auto try_morans = [](const metrics::CellField& f) {
        try {
            return metrics::morans_i(f);
        } catch (const std::exception&) {
            return kNaN;  // undefined (constant field / too few cells)
        }
    };
    st.morans_i_observed = try_morans(map.observed_field());
    st.morans_i_interpolated = try_morans(map.full_field());
    st.morans_i = st.coverage < 1.0 ? st.morans_i_observed : st.morans_i_interpolated;
    return st;
}

SeriesStats series_stats(const std::vector<PollutionMap>& slices) {
    if (slices.empty()) throw DataError("series_stats: no slices");
    SeriesStats out;
    std::vector<metrics::CellField> fields;
    fields.reserve(slices.size());
    for (const auto& m : slices) {
        out.per_slice.push_back(map_stats(m));
        fields.push_back(m.full_field());
    }
    out.variation = metrics::adjacent_variation(fields);
    return out;
}

namespace {

double mean_pct_difference(const std::vector<MapStats>& a,
                           const std::vector<MapStats>& b, std::size_t* n_out) {
    std::map<std::int64_t, double> bm;
    for (const auto& s : b) bm[s.interval_start] = s.mean;
    KahanSum sum;
    std::size_t n = 0;
    for (const auto& s : a) {
        auto it = bm.find(s.interval_start);
        if (it == bm.end()) continue;
        if (it->second == 0.0) continue;
        sum.add(100.0 * (s.mean - it->second) / it->second);
        ++n;
    }
    if (n == 0) throw DataError("bias_report: no common time slices");
    if (n_out) *n_out = n;
    return sum.value() / static_cast<double>(n);
}

}  // namespace

BiasReport bias_report(const std::vector<MapStats>& fixed,
                       const std::vector<MapStats>& mobile,
                       const std::vector<MapStats>& mapped) {
    BiasReport rep;
    rep.mapped_vs_fixed_pct = mean_pct_difference(mapped, fixed, &rep.n_slices);
    rep.mapped_vs_mobile_pct = mean_pct_difference(mapped, mobile, nullptr);
    rep.mobile_vs_fixed_pct = mean_pct_difference(mobile, fixed, nullptr);
    return rep;
}

std::string BiasReport::csv() const {
    char buf[256];
    std::ostringstream ss;
    ss << "pair,percent,n_slices\n";
    std::snprintf(buf, sizeof(buf), "mapped_vs_fixed,%.6f,%zu\n",
                  mapped_vs_fixed_pct, n_slices);
    ss << buf;
    std::snprintf(buf, sizeof(buf), "mapped_vs_mobile,%.6f,%zu\n",
                  mapped_vs_mobile_pct, n_slices);
    ss << buf;
    std::snprintf(buf, sizeof(buf), "mobile_vs_fixed,%.6f,%zu\n",
                  mobile_vs_fixed_pct, n_slices);
    ss << buf;
    return ss.str();
}

}  // namespace pmfuse::maps
