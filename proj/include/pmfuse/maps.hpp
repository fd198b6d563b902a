#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmfuse/align.hpp"
#include "pmfuse/geo.hpp"
#include "pmfuse/metrics.hpp"

namespace pmfuse::maps {

enum class Source { fixed, mobile, mapped };
const char* source_name(Source s);

struct PollutionMap {
    geo::GridSpec grid;
    align::TimeKey time;
    Source source = Source::fixed;
    std::vector<double> values;          // n_cells, full map (IDW fills all)
    std::vector<std::uint8_t> observed;  // cells holding a pre-interpolation value
    std::vector<double> observed_values; // raw observation per observed cell (NaN otherwise)

    double coverage() const;
    metrics::CellField full_field() const;
    metrics::CellField observed_field() const;

    std::string csv() const;  // col,row,pm25
    static std::string filename(Source source, std::int64_t interval_start,
                                std::int64_t interval_len);
};

struct WeightedPoint {
    geo::ProjectedPoint pos;
    double value = 0.0;
};

struct IdwConfig {
    double power = 2.0;
    int k_nearest = 0;  // 0 = all points participate
    int threads = 1;
};

// Cell-center IDW: v(c) = sum(w_i v_i)/sum(w_i), w_i = d_i^-power. A source
// point within 1 m of a cell center short-circuits to that point's value.
std::vector<double> idw(const std::vector<WeightedPoint>& points,
                        const geo::GridSpec& grid, const IdwConfig& cfg);

PollutionMap build_fixed_map(const std::vector<WeightedPoint>& station_values,
                             const geo::GridSpec& grid, const align::TimeKey& time,
                             const IdwConfig& cfg);

// cell_means: per-cell mean mobile concentrations; points enter the
// interpolation at their cell centers.
PollutionMap build_mobile_map(const std::vector<std::pair<geo::CellKey, double>>& cell_means,
                              const geo::GridSpec& grid, const align::TimeKey& time,
                              const IdwConfig& cfg);

// Union of mapped predictions (cell centers) and fixed station values; the
// fixed value wins where a station's containing cell also has a mapped value.
PollutionMap build_mapped_map(const std::vector<std::pair<geo::CellKey, double>>& mapped,
                              const std::vector<WeightedPoint>& station_values,
                              const geo::GridSpec& grid, const align::TimeKey& time,
                              const IdwConfig& cfg);

struct MapStats {
    Source source = Source::fixed;
    std::int64_t interval_start = 0;
    double mean = 0.0;  // over full map values
    double stddev = 0.0;
    double coverage = 0.0;
    // morans_i follows the reporting rule: observed cells while coverage < 1,
    // the full map otherwise. The two labeled variants are always emitted.
    double morans_i = 0.0;
    double morans_i_observed = 0.0;      // NaN when undefined
    double morans_i_interpolated = 0.0;  // NaN when undefined

    static std::string csv_header();
    std::string csv_row() const;
};

MapStats map_stats(const PollutionMap& map);

struct SeriesStats {
    std::vector<MapStats> per_slice;
    metrics::AdjacentVariation variation;  // over the full-map slices
};

SeriesStats series_stats(const std::vector<PollutionMap>& slices);

struct BiasReport {
    double mapped_vs_fixed_pct = 0.0;
    double mapped_vs_mobile_pct = 0.0;
    double mobile_vs_fixed_pct = 0.0;
    std::size_t n_slices = 0;

    std::string csv() const;  // pair,percent,n_slices
};

// Per common slice: 100 * (mean_A - mean_B) / mean_B, averaged over slices.
// Series are matched by interval_start.
BiasReport bias_report(const std::vector<MapStats>& fixed,
                       const std::vector<MapStats>& mobile,
                       const std::vector<MapStats>& mapped);

// Grayscale rendering, one pixel per cell, row 0 at the south edge. The
// fixed ramp maps 0..100 ug/m3 onto 0..255 (clamped) so slices compare.
void write_map_png(const PollutionMap& map, const std::string& path);

}  // namespace pmfuse::maps
