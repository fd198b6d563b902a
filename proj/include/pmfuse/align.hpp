#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pmfuse/geo.hpp"
#include "pmfuse/ingest.hpp"

namespace pmfuse::align {

struct TimeKey {
    std::int64_t interval_start = 0;
    std::int64_t interval_len = 0;

    static TimeKey of(std::int64_t t, std::int64_t len) {
        std::int64_t start = t - ((t % len) + len) % len;  // floor for any sign
        return TimeKey{start, len};
    }
    bool operator==(const TimeKey&) const = default;
};

// Mergeable count/mean/min/max summary of one bucket.
struct MobileStats {
    std::int64_t n = 0;
    double mean = 0.0;
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();

    void add(double v) {
        ++n;
        mean += (v - mean) / static_cast<double>(n);
        if (v < min) min = v;
        if (v > max) max = v;
    }
    void merge(const MobileStats& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        double total = static_cast<double>(n + o.n);
        mean = (static_cast<double>(n) * mean + static_cast<double>(o.n) * o.mean) / total;
        n += o.n;
        if (o.min < min) min = o.min;
        if (o.max > max) max = o.max;
        if (mean < min) mean = min;  // shield against rounding drift
        if (mean > max) mean = max;
    }
};

// A per-(cell, interval) aggregate. Station-keyed samples carry station_id;
// tessellation-keyed samples carry cell.
struct CellSample {
    std::string station_id;
    std::optional<geo::CellKey> cell;
    TimeKey time;
    MobileStats stats;
    std::optional<double> fixed_value;
};

// One calibrated, projected mobile observation; the unit that flows from
// calibration into aggregation, mapping and map synthesis.
struct CalibratedSample {
    geo::ProjectedPoint pos;
    std::int64_t t = 0;
    double pm25 = 0.0;
};

struct ProjectedStation {
    std::string station_id;
    geo::ProjectedPoint pos;
};

// Single-pass aggregator over either station-centered squares (a record
// inside k overlapping squares contributes to all k) or a regular grid.
class Aggregator {
public:
    Aggregator(std::vector<geo::StationCell> cells, std::int64_t interval_len);
    Aggregator(const geo::GridSpec& grid, std::int64_t interval_len);

    void add(const CalibratedSample& s);
    void merge(const Aggregator& other);
    std::int64_t interval_len() const { return interval_len_; }
    std::size_t bucket_count() const { return buckets_.size(); }

    // Canonically ordered (station/cell, then interval_start).
    std::vector<CellSample> finish() const;

private:
    struct Key {
        std::int64_t spatial;  // station index or cell index
        std::int64_t interval_index;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            std::uint64_t h = static_cast<std::uint64_t>(k.spatial) * 0x9e3779b97f4a7c15ULL;
            h ^= static_cast<std::uint64_t>(k.interval_index) + (h << 6) + (h >> 2);
            return static_cast<std::size_t>(h);
        }
    };

    std::int64_t interval_len_;
    bool station_mode_;
    std::vector<geo::StationCell> station_cells_;
    geo::GridSpec grid_{};
    std::unordered_map<Key, MobileStats, KeyHash> buckets_;
};

std::vector<CellSample> aggregate(const std::vector<CalibratedSample>& records,
                                  const std::vector<geo::StationCell>& cells,
                                  std::int64_t interval_len);
std::vector<CellSample> aggregate(const std::vector<CalibratedSample>& records,
                                  const geo::GridSpec& grid,
                                  std::int64_t interval_len);

// Average fixed values per (station, interval) and attach them to matching
// station-keyed samples; samples without a fixed value keep it empty.
void join_fixed(std::vector<CellSample>& samples,
                const std::vector<ingest::FixedRecord>& fixed,
                std::int64_t interval_len);

struct SweepConfig {
    std::vector<double> distances_m = {500.0, 1000.0, 2000.0};
    std::vector<std::int64_t> intervals_s = {300, 600, 1800, 3600};
    double tolerance = 0.02;     // how far below max r still counts as acceptable
    std::size_t min_pairs = 10;  // fewer pairs marks the sweep point invalid
};

struct SweepCell {
    double r = 0.0;
    std::size_t n_pairs = 0;
    bool valid = false;
};

struct SweepResult {
    std::vector<double> distances_m;
    std::vector<std::int64_t> intervals_s;
    std::vector<SweepCell> cells;  // distances x intervals, row-major
    double chosen_distance_m = 0.0;
    std::int64_t chosen_interval_s = 0;

    const SweepCell& at(std::size_t di, std::size_t ii) const {
        return cells[di * intervals_s.size() + ii];
    }
    std::string csv() const;  // Table layout: rows = distance, cols = interval
};

// For every (distance, interval): aggregate on station squares of side
// `distance`, join fixed, correlate (mean mobile, fixed) pairs. Chooses the
// finest (smallest distance, then smallest interval) valid cell whose r is
// within `tolerance` of the matrix maximum.
SweepResult resolution_sweep(const std::vector<CalibratedSample>& mobile,
                             const std::vector<ingest::FixedRecord>& fixed,
                             const std::vector<ProjectedStation>& stations,
                             const SweepConfig& cfg);

}  // namespace pmfuse::align
