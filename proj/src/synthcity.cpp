#include "pmfuse/synthcity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>

#include "pmfuse/errors.hpp"
#include "pmfuse/util.hpp"

namespace pmfuse::synthcity {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double point_segment_distance(const geo::ProjectedPoint& p, const geo::ProjectedPoint& a,
                              const geo::ProjectedPoint& b) {
    double dx = b.x - a.x, dy = b.y - a.y;
    double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

}  // namespace

void ScenarioConfig::validate() const {
    std::vector<std::string> bad;
    if (n_stations < 1) bad.push_back("scenario.n_stations");
    if (n_taxis < 1) bad.push_back("scenario.n_taxis");
    if (duration_s < 300) bad.push_back("scenario.duration_s");
    if (colocation_s < 3000) bad.push_back("scenario.colocation_s");
    if (start % 300 != 0) bad.push_back("scenario.start (not 5-min aligned)");
    if (truth.n_plumes < 1) bad.push_back("scenario.n_plumes");
    if (!(truth.gust_period_s > 0.0)) bad.push_back("scenario.gust_period_s");
    if (sensor.noise_std < 0.0) bad.push_back("scenario.noise_std");
    if (sensor.bias <= 0.0) bad.push_back("scenario.bias");
    if (!(taxi_speed_min > 0.0 && taxi_speed_max >= taxi_speed_min))
        bad.push_back("scenario.taxi_speed");
    if (!bad.empty()) {
        std::string msg = "invalid scenario config:";
        for (const auto& k : bad) msg += " " + k;
        throw ValidationError(msg);
    }
}

double Scenario::rh_at(std::int64_t t) const {
    double day = static_cast<double>(((t % 86400) + 86400) % 86400) / 86400.0;
    return 62.0 + 20.0 * std::sin(kTwoPi * day + rh_phase);
}

double Scenario::temp_at(std::int64_t t) const {
    double day = static_cast<double>(((t % 86400) + 86400) % 86400) / 86400.0;
    return 22.0 + 7.0 * std::sin(kTwoPi * day + temp_phase);
}

double Scenario::road_distance(const geo::ProjectedPoint& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : roads) {
        // Cheap reject: segment bbox inflated by current best.
        double lox = std::min(e.a.x, e.b.x) - best, hix = std::max(e.a.x, e.b.x) + best;
        double loy = std::min(e.a.y, e.b.y) - best, hiy = std::max(e.a.y, e.b.y) + best;
        if (p.x < lox || p.x > hix || p.y < loy || p.y > hiy) continue;
        best = std::min(best, point_segment_distance(p, e.a, e.b));
        if (best == 0.0) break;
    }
    return best;
}

double Scenario::truth(const geo::ProjectedPoint& p, std::int64_t t) const {
    double dt = static_cast<double>(t - cfg.start);
    double v = cfg.truth.background;
    for (const auto& pl : plumes) {
        double dx = p.x - (pl.x + pl.vx * dt);
        double dy = p.y - (pl.y + pl.vy * dt);
        double gust =
            1.0 + cfg.truth.gust_amp *
                      std::sin(kTwoPi * dt / pl.gust_period_s + pl.gust_phase);
        v += pl.amp * gust *
             std::exp(-(dx * dx + dy * dy) / (2.0 * pl.sigma * pl.sigma));
    }
    v += cfg.truth.road_amp * std::exp(-road_distance(p) / cfg.truth.road_decay_m);
    double day = static_cast<double>(((t % 86400) + 86400) % 86400) / 86400.0;
    v *= 1.0 + cfg.truth.diurnal_amp * std::sin(kTwoPi * day + diurnal_phase);
    return clamp_pm25(v);
}

double Scenario::sensor_read(double truth_value, std::int64_t t, double device_factor,
                             Rng& noise) const {
    double drh = rh_at(t) - 60.0;
    double dtemp = temp_at(t) - 20.0;
    double factor = 1.0 + cfg.sensor.rh_coef * drh + cfg.sensor.rh_quad * drh * drh +
                    cfg.sensor.temp_coef * dtemp;
    double v = truth_value * device_factor * factor +
               cfg.sensor.noise_std * noise.next_gaussian();
    return clamp_pm25(v);
}

Scenario build_scenario(const ScenarioConfig& cfg, const geo::GridSpec& grid,
                        const geo::GeoPoint& ref) {
    cfg.validate();
    grid.validate();
    if (grid.n_cols < 4 || grid.n_rows < 4)
        throw ValidationError("scenario grid must be at least 4x4 cells");

    Scenario sc;
    sc.cfg = cfg;
    sc.ref = ref;
    sc.grid = grid;

    Rng rng(substream_seed(cfg.seed, "scenario"));

    // Truth field parameters. Plume centers land in the inner 70% box.
    const double w = grid.n_cols * grid.cell_size, h = grid.n_rows * grid.cell_size;
    for (int i = 0; i < cfg.truth.n_plumes; ++i) {
        Plume pl;
        pl.x = grid.origin.x + w * rng.uniform(0.15, 0.85);
        pl.y = grid.origin.y + h * rng.uniform(0.15, 0.85);
        pl.amp = rng.uniform(cfg.truth.plume_amp_min, cfg.truth.plume_amp_max);
        pl.sigma = rng.uniform(cfg.truth.plume_sigma_min, cfg.truth.plume_sigma_max);
        double speed = rng.uniform(0.0, cfg.truth.plume_drift_max);
        double heading = rng.uniform(0.0, kTwoPi);
        pl.vx = speed * std::cos(heading);
        pl.vy = speed * std::sin(heading);
        pl.gust_phase = rng.uniform(0.0, kTwoPi);
        pl.gust_period_s = cfg.truth.gust_period_s * rng.uniform(0.7, 1.3);
        sc.plumes.push_back(pl);
    }
    sc.diurnal_phase = rng.uniform(0.0, kTwoPi);
    sc.rh_phase = rng.uniform(0.0, kTwoPi);
    sc.temp_phase = rng.uniform(0.0, kTwoPi);
    sc.gust_phase = rng.uniform(0.0, kTwoPi);

    // Road lattice over cell centers: a seeded random spanning tree keeps the
    // graph connected, extra edges survive with a probability that decays
    // toward the rim (center-dense, periphery-sparse).
    const std::int32_t nc = grid.n_cols, nr = grid.n_rows;
    const std::int64_t n_nodes = grid.n_cells();
    auto node_pos = [&](std::int64_t idx) {
        return grid.cell_center(grid.key_of(idx));
    };
    struct LatticeEdge {
        std::int64_t a, b;
        bool horizontal;
        std::int32_t line;  // row index for horizontal edges, col for vertical
    };
    std::vector<LatticeEdge> edges;
    for (std::int32_t r = 0; r < nr; ++r)
        for (std::int32_t c = 0; c < nc; ++c) {
            std::int64_t idx = grid.index_of(geo::CellKey{c, r});
            if (c + 1 < nc)
                edges.push_back(LatticeEdge{idx, grid.index_of(geo::CellKey{c + 1, r}),
                                            true, r});
            if (r + 1 < nr)
                edges.push_back(LatticeEdge{idx, grid.index_of(geo::CellKey{c, r + 1}),
                                            false, c});
        }

    // Randomized Kruskal for the spanning tree.
    std::vector<std::size_t> edge_order = rng.shuffled_indices(edges.size());
    std::vector<std::int64_t> parent(n_nodes);
    for (std::int64_t i = 0; i < n_nodes; ++i) parent[i] = i;
    std::function<std::int64_t(std::int64_t)> find = [&](std::int64_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    std::vector<bool> keep(edges.size(), false);
    for (std::size_t ei : edge_order) {
        std::int64_t ra = find(edges[ei].a), rb = find(edges[ei].b);
        if (ra != rb) {
            parent[ra] = rb;
            keep[ei] = true;
        }
    }
    const double cx = grid.origin.x + w / 2.0, cy = grid.origin.y + h / 2.0;
    for (std::size_t ei = 0; ei < edges.size(); ++ei) {
        if (keep[ei]) continue;
        auto pa = node_pos(edges[ei].a), pb = node_pos(edges[ei].b);
        double mx = (pa.x + pb.x) / 2.0, my = (pa.y + pb.y) / 2.0;
        double dnorm = std::max(std::abs(mx - cx) / (w / 2.0),
                                std::abs(my - cy) / (h / 2.0));
        double p = cfg.road_keep_base + cfg.road_keep_center * (1.0 - dnorm);
        if (rng.next_double() < p) keep[ei] = true;
    }

    sc.adjacency.assign(static_cast<std::size_t>(n_nodes), {});
    for (std::size_t ei = 0; ei < edges.size(); ++ei) {
        if (!keep[ei]) continue;
        const auto& e = edges[ei];
        int cls = e.line % 4 == 0 ? 0 : (e.line % 2 == 0 ? 1 : 2);
        sc.roads.push_back(RoadEdge{node_pos(e.a), node_pos(e.b), cls});
        sc.adjacency[static_cast<std::size_t>(e.a)].push_back(
            static_cast<std::int32_t>(e.b));
        sc.adjacency[static_cast<std::size_t>(e.b)].push_back(
            static_cast<std::int32_t>(e.a));
    }
    for (auto& adj : sc.adjacency) std::sort(adj.begin(), adj.end());

    // Stations at distinct cell centers; the reference station (index 0)
    // sits at the central cell where coverage is densest.
    std::int64_t max_stations = n_nodes;
    if (cfg.n_stations > max_stations)
        throw ValidationError("scenario.n_stations exceeds grid cell count");
    std::vector<std::int64_t> chosen;
    std::int64_t center_cell = grid.index_of(geo::CellKey{nc / 2, nr / 2});
    chosen.push_back(center_cell);
    std::vector<std::int64_t> pool;
    for (std::int64_t i = 0; i < n_nodes; ++i)
        if (i != center_cell) pool.push_back(i);
    for (int i = 1; i < cfg.n_stations; ++i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(pool.size()));
        chosen.push_back(pool[j]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
    }
    for (int i = 0; i < cfg.n_stations; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "S%02d", i);
        sc.stations.push_back(StationPlace{id, sc.grid.key_of(chosen[i]),
                                           node_pos(chosen[i])});
    }
    return sc;
}

maps::PollutionMap truth_map(const Scenario& sc, const align::TimeKey& time) {
    maps::PollutionMap m;
    m.grid = sc.grid;
    m.time = time;
    m.source = maps::Source::fixed;  // provenance tag unused for truth grids
    m.values.resize(static_cast<std::size_t>(sc.grid.n_cells()));
    m.observed.assign(m.values.size(), 1);
    for (std::int64_t i = 0; i < sc.grid.n_cells(); ++i)
        m.values[static_cast<std::size_t>(i)] =
            sc.truth(sc.grid.cell_center(sc.grid.key_of(i)), time.interval_start);
    m.observed_values = m.values;
    return m;
}

namespace {

std::string fmt_geo(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.8f", v);
    return buf;
}

}  // namespace

std::vector<std::string> generate(const Scenario& sc, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const ScenarioConfig& cfg = sc.cfg;
    std::vector<std::string> files;
    char buf[512];

    auto emit = [&](const std::string& name, const std::string& content) {
        write_text_file(out_dir + "/" + name, content);
        files.push_back(name);
    };

    // stations.csv
    {
        std::ostringstream ss;
        ss << "station_id,lat,lon\n";
        for (const auto& st : sc.stations) {
            geo::GeoPoint g = geo::unproject(st.pos, sc.ref);
            ss << st.station_id << ',' << fmt_geo(g.lat) << ',' << fmt_geo(g.lon)
               << '\n';
        }
        emit("stations.csv", ss.str());
    }

    // fixed.csv: all stations over the map window; the reference station
    // additionally covers the co-location window. Stations sample truth
    // exactly (reference-grade monitors) at 5-minute cadence, phased to the
    // interval midpoint so the samples represent the same instants as the
    // interval means formed from mobile data.
    {
        std::ostringstream ss;
        ss << "station_id,timestamp,pm25\n";
        const auto& ref_st = sc.stations.front();
        for (std::int64_t t = cfg.start - cfg.colocation_s; t < cfg.start; t += 300) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%.3f", ref_st.station_id.c_str(),
                          format_iso8601_utc(t + 150).c_str(),
                          sc.truth(ref_st.pos, t + 150));
            ss << buf << '\n';
        }
        for (const auto& st : sc.stations)
            for (std::int64_t t = cfg.start; t < cfg.start + cfg.duration_s; t += 300) {
                std::snprintf(buf, sizeof(buf), "%s,%s,%.3f", st.station_id.c_str(),
                              format_iso8601_utc(t + 150).c_str(),
                              sc.truth(st.pos, t + 150));
                ss << buf << '\n';
            }
        emit("fixed.csv", ss.str());
    }

    // colocation.csv: stationary devices beside the reference station.
    {
        std::ostringstream ss;
        ss << "device_id,timestamp,lat,lon,pm25,rh,temp\n";
        const auto& ref_st = sc.stations.front();
        geo::GeoPoint g = geo::unproject(ref_st.pos, sc.ref);
        for (std::size_t d = 0; d < cfg.sensor.colo_device_factors.size(); ++d) {
            Rng noise(substream_seed(cfg.seed, "colo_" + std::to_string(d)));
            double factor = cfg.sensor.colo_device_factors[d];
            std::string id = "COLO" + std::to_string(d + 1);
            for (std::int64_t t = cfg.start - cfg.colocation_s; t < cfg.start; t += 15) {
                double raw = sc.sensor_read(sc.truth(ref_st.pos, t), t, factor, noise);
                std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%.3f,%.3f,%.3f",
                              id.c_str(), format_iso8601_utc(t).c_str(),
                              fmt_geo(g.lat).c_str(), fmt_geo(g.lon).c_str(), raw,
                              sc.rh_at(t), sc.temp_at(t));
                ss << buf << '\n';
            }
        }
        emit("colocation.csv", ss.str());
    }

    // mobile.csv: seeded random walks along the road graph, 15 s cadence.
    // Rows are generated per taxi and sorted canonically before writing.
    {
        struct Row {
            std::int64_t t;
            std::string device;
            std::string line;
        };
        std::vector<Row> rows;
        for (int taxi = 0; taxi < cfg.n_taxis; ++taxi) {
            Rng rng(substream_seed(cfg.seed, "taxi_" + std::to_string(taxi)));
            Rng noise(substream_seed(cfg.seed, "taxi_noise_" + std::to_string(taxi)));
            char id[16];
            std::snprintf(id, sizeof(id), "T%03d", taxi);
            double speed = rng.uniform(cfg.taxi_speed_min, cfg.taxi_speed_max);
            double device_factor =
                cfg.sensor.bias * (1.0 + cfg.sensor.fleet_spread * rng.next_gaussian());

            std::int32_t cur = static_cast<std::int32_t>(
                rng.next_below(static_cast<std::uint64_t>(sc.grid.n_cells())));
            while (sc.adjacency[static_cast<std::size_t>(cur)].empty())
                cur = static_cast<std::int32_t>(rng.next_below(
                    static_cast<std::uint64_t>(sc.grid.n_cells())));
            std::int32_t prev = -1;

            double t_now = static_cast<double>(cfg.start);
            const double t_end = static_cast<double>(cfg.start + cfg.duration_s);
            std::int64_t next_sample = cfg.start;
            while (t_now < t_end) {
                const auto& adj = sc.adjacency[static_cast<std::size_t>(cur)];
                std::int32_t next;
                if (adj.size() == 1) {
                    next = adj[0];
                } else {
                    do {
                        next = adj[static_cast<std::size_t>(rng.next_below(adj.size()))];
                    } while (next == prev);
                }
                geo::ProjectedPoint a = sc.grid.cell_center(sc.grid.key_of(cur));
                geo::ProjectedPoint b = sc.grid.cell_center(sc.grid.key_of(next));
                double len = std::hypot(b.x - a.x, b.y - a.y);
                double t_arrive = t_now + len / speed;
                while (static_cast<double>(next_sample) < t_arrive &&
                       next_sample < cfg.start + cfg.duration_s) {
                    double frac = (static_cast<double>(next_sample) - t_now) /
                                  (t_arrive - t_now);
                    geo::ProjectedPoint p{a.x + frac * (b.x - a.x),
                                          a.y + frac * (b.y - a.y)};
                    double raw = sc.sensor_read(sc.truth(p, next_sample), next_sample,
                                                device_factor, noise);
                    geo::GeoPoint g = geo::unproject(p, sc.ref);
                    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%.3f,%.3f,%.3f", id,
                                  format_iso8601_utc(next_sample).c_str(),
                                  fmt_geo(g.lat).c_str(), fmt_geo(g.lon).c_str(), raw,
                                  sc.rh_at(next_sample), sc.temp_at(next_sample));
                    rows.push_back(Row{next_sample, id, buf});
                    next_sample += 15;
                }
                t_now = t_arrive;
                prev = cur;
                cur = next;
            }
        }
        std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
            if (a.t != b.t) return a.t < b.t;
            return a.device < b.device;
        });
        std::ostringstream ss;
        ss << "device_id,timestamp,lat,lon,pm25,rh,temp\n";
        for (const auto& r : rows) ss << r.line << '\n';
        emit("mobile.csv", ss.str());
    }

    // features.csv (geometry schema): roads by class, buildings, land
    // use/cover zone rectangles.
    {
        Rng rng(substream_seed(cfg.seed, "features"));
        std::ostringstream ss;
        ss << "layer,kind,coords\n";
        const char* road_layers[3] = {"road_length.primary", "road_length.secondary",
                                      "road_length.tertiary"};
        for (const auto& e : sc.roads) {
            geo::GeoPoint ga = geo::unproject(e.a, sc.ref);
            geo::GeoPoint gb = geo::unproject(e.b, sc.ref);
            ss << road_layers[e.cls] << ",polyline," << fmt_geo(ga.lat) << ','
               << fmt_geo(ga.lon) << ',' << fmt_geo(gb.lat) << ',' << fmt_geo(gb.lon)
               << '\n';
        }
        const double w = sc.grid.n_cols * sc.grid.cell_size;
        const double h = sc.grid.n_rows * sc.grid.cell_size;
        const double cx = sc.grid.origin.x + w / 2.0;
        const double cy = sc.grid.origin.y + h / 2.0;
        auto emit_rect = [&](const std::string& layer, double x0, double y0, double x1,
                             double y1) {
            geo::GeoPoint ga = geo::unproject(geo::ProjectedPoint{x0, y0}, sc.ref);
            geo::GeoPoint gb = geo::unproject(geo::ProjectedPoint{x1, y1}, sc.ref);
            ss << layer << ",rect," << fmt_geo(ga.lat) << ',' << fmt_geo(ga.lon) << ','
               << fmt_geo(gb.lat) << ',' << fmt_geo(gb.lon) << '\n';
        };
        for (int i = 0; i < cfg.n_buildings; ++i) {
            // Clustered toward the center, like the road density.
            double bx = std::clamp(cx + rng.next_gaussian() * w / 5.0,
                                   sc.grid.origin.x + 30.0,
                                   sc.grid.origin.x + w - 30.0);
            double by = std::clamp(cy + rng.next_gaussian() * h / 5.0,
                                   sc.grid.origin.y + 30.0,
                                   sc.grid.origin.y + h - 30.0);
            double half = rng.uniform(10.0, 30.0);
            emit_rect("building_area", bx - half, by - half, bx + half, by + half);
        }
        const char* use_classes[5] = {"residential", "commercial", "industrial",
                                      "transportation", "public"};
        const char* cover_classes[5] = {"artificial", "forest", "grass", "water",
                                        "cultivated"};
        for (const char* cls : use_classes)
            for (int i = 0; i < 3; ++i) {
                double zx = sc.grid.origin.x + rng.uniform(0.0, w);
                double zy = sc.grid.origin.y + rng.uniform(0.0, h);
                double zw = rng.uniform(0.8, 2.5) * sc.grid.cell_size;
                double zh = rng.uniform(0.8, 2.5) * sc.grid.cell_size;
                emit_rect(std::string("land_use.") + cls, zx, zy,
                          std::min(zx + zw, sc.grid.origin.x + w),
                          std::min(zy + zh, sc.grid.origin.y + h));
            }
        for (const char* cls : cover_classes)
            for (int i = 0; i < 3; ++i) {
                double zx = sc.grid.origin.x + rng.uniform(0.0, w);
                double zy = sc.grid.origin.y + rng.uniform(0.0, h);
                double zw = rng.uniform(1.0, 4.0) * sc.grid.cell_size;
                double zh = rng.uniform(1.0, 4.0) * sc.grid.cell_size;
                emit_rect(std::string("land_cover.") + cls, zx, zy,
                          std::min(zx + zw, sc.grid.origin.x + w),
                          std::min(zy + zh, sc.grid.origin.y + h));
            }
        emit("features.csv", ss.str());
    }

    // Truth grids at every 5-minute slice of the map window, named by the
    // interval start but evaluated at the interval midpoint, matching what
    // an interval aggregate represents.
    for (std::int64_t t = cfg.start; t < cfg.start + cfg.duration_s; t += 300) {
        maps::PollutionMap m = truth_map(sc, align::TimeKey{t + 150, 300});
        std::string name = "truth_" + format_iso8601_utc(t) + "_300.csv";
        emit(name, m.csv());
    }

    // MANIFEST: checksum per emitted file, sorted by name.
    {
        std::vector<std::string> sorted = files;
        std::sort(sorted.begin(), sorted.end());
        std::ostringstream ss;
        for (const auto& name : sorted) {
            std::snprintf(buf, sizeof(buf), "%016llx  %s",
                          static_cast<unsigned long long>(
                              file_checksum(out_dir + "/" + name)),
                          name.c_str());
            ss << buf << '\n';
        }
        write_text_file(out_dir + "/MANIFEST", ss.str());
        files.push_back("MANIFEST");
    }
    return files;
}

}  // namespace pmfuse::synthcity
