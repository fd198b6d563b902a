#include "pmfuse/align.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "pmfuse/errors.hpp"
#include "pmfuse/metrics.hpp"

namespace pmfuse::align {

Aggregator::Aggregator(std::vector<geo::StationCell> cells, std::int64_t interval_len)
    : interval_len_(interval_len), station_mode_(true),
      station_cells_(std::move(cells)) {
    if (interval_len_ <= 0) throw ValidationError("interval_len must be > 0");
}

Aggregator::Aggregator(const geo::GridSpec& grid, std::int64_t interval_len)
    : interval_len_(interval_len), station_mode_(false), grid_(grid) {
    if (interval_len_ <= 0) throw ValidationError("interval_len must be > 0");
    grid_.validate();
}

void Aggregator::add(const CalibratedSample& s) {
    std::int64_t iv = TimeKey::of(s.t, interval_len_).interval_start / interval_len_;
    if (station_mode_) {
        for (std::size_t i = 0; i < station_cells_.size(); ++i) {
            if (!geo::in_station_cell(s.pos, station_cells_[i])) continue;
            buckets_[Key{static_cast<std::int64_t>(i), iv}].add(s.pm25);
        }
    } else {
        auto key = geo::cell_of(s.pos, grid_);
        if (!key) return;  // outside the tessellation
        buckets_[Key{grid_.index_of(*key), iv}].add(s.pm25);
    }
}

void Aggregator::merge(const Aggregator& other) {
    PMFUSE_CHECK(other.interval_len_ == interval_len_ &&
                     other.station_mode_ == station_mode_,
                 "aggregator merge with mismatched configuration");
    for (const auto& [key, stats] : other.buckets_) buckets_[key].merge(stats);
}

std::vector<CellSample> Aggregator::finish() const {
    std::vector<std::pair<Key, MobileStats>> sorted(buckets_.begin(), buckets_.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        if (a.first.spatial != b.first.spatial) return a.first.spatial < b.first.spatial;
        return a.first.interval_index < b.first.interval_index;
    });
    std::vector<CellSample> out;
    out.reserve(sorted.size());
    for (const auto& [key, stats] : sorted) {
        CellSample s;
        s.time = TimeKey{key.interval_index * interval_len_, interval_len_};
        s.stats = stats;
        if (station_mode_)
            s.station_id = station_cells_[static_cast<std::size_t>(key.spatial)].station_id;
        else
            s.cell = grid_.key_of(key.spatial);
        PMFUSE_CHECK(stats.n >= 1 && stats.min <= stats.mean && stats.mean <= stats.max,
                     "cell sample stats out of order");
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<CellSample> aggregate(const std::vector<CalibratedSample>& records,
                                  const std::vector<geo::StationCell>& cells,
                                  std::int64_t interval_len) {
    Aggregator agg(cells, interval_len);
    for (const auto& r : records) agg.add(r);
    return agg.finish();
}

std::vector<CellSample> aggregate(const std::vector<CalibratedSample>& records,
                                  const geo::GridSpec& grid, std::int64_t interval_len) {
    Aggregator agg(grid, interval_len);
    for (const auto& r : records) agg.add(r);
    return agg.finish();
}

void join_fixed(std::vector<CellSample>& samples,
                const std::vector<ingest::FixedRecord>& fixed,
                std::int64_t interval_len) {
    if (interval_len <= 0) throw ValidationError("interval_len must be > 0");
    std::map<std::pair<std::string, std::int64_t>, std::pair<double, std::int64_t>> sums;
    for (const auto& f : fixed) {
        auto key = std::make_pair(f.station_id,
                                  TimeKey::of(f.t, interval_len).interval_start);
        auto& [sum, n] = sums[key];
        sum += f.pm25;
        ++n;
    }
    for (auto& s : samples) {
        if (s.station_id.empty()) continue;
        auto it = sums.find(std::make_pair(s.station_id, s.time.interval_start));
        if (it == sums.end()) continue;
        s.fixed_value = it->second.first / static_cast<double>(it->second.second);
    }
}

std::string SweepResult::csv() const {
    std::ostringstream ss;
    ss << "distance_m";
    for (auto iv : intervals_s) ss << ',' << iv;
    ss << '\n';
    char buf[32];
    for (std::size_t di = 0; di < distances_m.size(); ++di) {
        ss << static_cast<std::int64_t>(distances_m[di]);
        for (std::size_t ii = 0; ii < intervals_s.size(); ++ii) {
            const SweepCell& c = at(di, ii);
            if (c.valid) {
                std::snprintf(buf, sizeof(buf), "%.6f", c.r);
                ss << ',' << buf;
            } else {
                ss << ",nan";
            }
        }
        ss << '\n';
    }
    ss << "chosen," << static_cast<std::int64_t>(chosen_distance_m) << ','
       << chosen_interval_s << '\n';
    return ss.str();
}

SweepResult resolution_sweep(const std::vector<CalibratedSample>& mobile,
                             const std::vector<ingest::FixedRecord>& fixed,
                             const std::vector<ProjectedStation>& stations,
                             const SweepConfig& cfg) {
    if (cfg.distances_m.empty() || cfg.intervals_s.empty())
        throw ValidationError("sweep needs at least one distance and one interval");
    if (stations.size() < 2)
        throw DataError("sweep needs at least 2 stations");

    SweepResult res;
    res.distances_m = cfg.distances_m;
    res.intervals_s = cfg.intervals_s;
    res.cells.assign(cfg.distances_m.size() * cfg.intervals_s.size(), SweepCell{});

    for (std::size_t di = 0; di < cfg.distances_m.size(); ++di) {
        double side = cfg.distances_m[di];
        std::vector<geo::StationCell> squares;
        squares.reserve(stations.size());
        for (const auto& st : stations)
            squares.push_back(geo::StationCell{st.station_id, st.pos, side / 2.0});
        for (std::size_t ii = 0; ii < cfg.intervals_s.size(); ++ii) {
            std::int64_t interval = cfg.intervals_s[ii];
            auto samples = aggregate(mobile, squares, interval);
            join_fixed(samples, fixed, interval);
            metrics::PairedSeries pairs;
            for (const auto& s : samples) {
                if (!s.fixed_value) continue;
                pairs.y.push_back(*s.fixed_value);
                pairs.y_hat.push_back(s.stats.mean);
            }
            SweepCell& cell = res.cells[di * cfg.intervals_s.size() + ii];
            cell.n_pairs = pairs.y.size();
            if (cell.n_pairs < cfg.min_pairs) continue;
            try {
                cell.r = metrics::pearson_r(pairs);
                cell.valid = true;
            } catch (const UndefinedStatisticError&) {
                // zero-variance sweep point stays invalid
            }
        }
    }

    double max_r = -2.0;
    for (const auto& c : res.cells)
        if (c.valid && c.r > max_r) max_r = c.r;
    if (max_r < -1.0)
        throw DataError("resolution sweep: no valid sweep point");

    // Scan finest-first regardless of the order the config listed them in.
    std::vector<std::size_t> dorder(cfg.distances_m.size()), iorder(cfg.intervals_s.size());
    for (std::size_t i = 0; i < dorder.size(); ++i) dorder[i] = i;
    for (std::size_t i = 0; i < iorder.size(); ++i) iorder[i] = i;
    std::sort(dorder.begin(), dorder.end(), [&](std::size_t a, std::size_t b) {
        return cfg.distances_m[a] < cfg.distances_m[b];
    });
    std::sort(iorder.begin(), iorder.end(), [&](std::size_t a, std::size_t b) {
        return cfg.intervals_s[a] < cfg.intervals_s[b];
    });
    bool chosen = false;
    for (std::size_t di : dorder) {
        for (std::size_t ii : iorder) {
            const SweepCell& c = res.at(di, ii);
            if (c.valid && c.r >= max_r - cfg.tolerance) {
                res.chosen_distance_m = cfg.distances_m[di];
                res.chosen_interval_s = cfg.intervals_s[ii];
                chosen = true;
                break;
            }
        }
        if (chosen) break;
    }
    PMFUSE_CHECK(chosen, "sweep selection failed despite a valid maximum");
    return res;
}

}  // namespace pmfuse::align
