#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "pmfuse/errors.hpp"
#include "pmfuse/ingest.hpp"
#include "pmfuse/pipeline.hpp"
#include "pmfuse/synthcity.hpp"
#include "pmfuse/util.hpp"

using namespace pmfuse;
using namespace pmfuse::synthcity;

namespace {

namespace fs = std::filesystem;

pipeline::GridFrame small_frame() {
    return pipeline::make_frame(23.05, 113.20, 500.0, 8, 8);
}

ScenarioConfig small_config() {
    ScenarioConfig cfg;
    cfg.seed = 5;
    cfg.n_stations = 8;
    cfg.n_taxis = 10;
    cfg.duration_s = 1200;
    cfg.colocation_s = 7200;
    return cfg;
}

std::string fresh_dir(const std::string& name) {
    std::string dir = (fs::temp_directory_path() / name).string();
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("scenario config validation lists offending fields") {
    ScenarioConfig bad;
    bad.n_taxis = 0;
    bad.sensor.noise_std = -1;
    try {
        bad.validate();
        FAIL("expected validation error");
    } catch (const ValidationError& e) {
        std::string msg = e.what();
        CHECK(msg.find("scenario.n_taxis") != std::string::npos);
        CHECK(msg.find("scenario.noise_std") != std::string::npos);
    }
}

TEST_CASE("same seed generates byte-identical outputs") {
    auto frame = small_frame();
    auto cfg = small_config();
    Scenario sc = build_scenario(cfg, frame.grid, frame.ref);
    std::string d1 = fresh_dir("pmfuse_synth_a");
    std::string d2 = fresh_dir("pmfuse_synth_b");
    auto f1 = generate(sc, d1);
    auto f2 = generate(sc, d2);
    REQUIRE(f1 == f2);
    for (const auto& name : f1)
        CHECK(read_text_file(d1 + "/" + name) == read_text_file(d2 + "/" + name));
}

TEST_CASE("zero-noise unit-bias sensor reproduces truth along trajectories") {
    auto frame = small_frame();
    auto cfg = small_config();
    cfg.sensor.bias = 1.0;
    cfg.sensor.noise_std = 0.0;
    cfg.sensor.rh_coef = 0.0;
    cfg.sensor.rh_quad = 0.0;
    cfg.sensor.temp_coef = 0.0;
    cfg.sensor.fleet_spread = 0.0;
    Scenario sc = build_scenario(cfg, frame.grid, frame.ref);
    std::string dir = fresh_dir("pmfuse_synth_zero");
    generate(sc, dir);
    auto records = ingest::load_mobile(dir + "/mobile.csv");
    REQUIRE(!records.empty());
    for (const auto& r : records) {
        geo::ProjectedPoint p = geo::project(r.pos, frame.ref);
        double t = sc.truth(p, r.t);
        CHECK(r.pm25_raw == doctest::Approx(t).epsilon(2e-3));  // %.3f rounding
    }
}

TEST_CASE("biased fleet runs roughly 40% above truth where it samples") {
    auto frame = small_frame();
    auto cfg = small_config();
    cfg.sensor.bias = 1.4;
    Scenario sc = build_scenario(cfg, frame.grid, frame.ref);
    std::string dir = fresh_dir("pmfuse_synth_bias");
    generate(sc, dir);
    auto records = ingest::load_mobile(dir + "/mobile.csv");
    REQUIRE(records.size() > 100);
    double ratio_sum = 0;
    for (const auto& r : records) {
        geo::ProjectedPoint p = geo::project(r.pos, frame.ref);
        ratio_sum += r.pm25_raw / sc.truth(p, r.t);
    }
    // bias 1.4 modulated by the humidity/temperature factor of the window
    double mean_ratio = ratio_sum / static_cast<double>(records.size());
    CHECK(mean_ratio > 1.2);
    CHECK(mean_ratio < 1.65);
}

TEST_CASE("taxi positions always lie on road polylines") {
    auto frame = small_frame();
    auto cfg = small_config();
    Scenario sc = build_scenario(cfg, frame.grid, frame.ref);
    std::string dir = fresh_dir("pmfuse_synth_roads");
    generate(sc, dir);
    auto records = ingest::load_mobile(dir + "/mobile.csv");
    REQUIRE(!records.empty());
    for (const auto& r : records) {
        geo::ProjectedPoint p = geo::project(r.pos, frame.ref);
        CHECK(sc.road_distance(p) < 0.05);  // lat/lon rounding at %.8f
    }
}

TEST_CASE("coverage grows with fleet size and duration") {
    auto frame = small_frame();
    auto covered_cells = [&](int n_taxis, std::int64_t duration) {
        ScenarioConfig cfg = small_config();
        cfg.n_taxis = n_taxis;
        cfg.duration_s = duration;
        Scenario sc = build_scenario(cfg, frame.grid, frame.ref);
        std::string dir = fresh_dir("pmfuse_synth_cov");
        generate(sc, dir);
        auto records = ingest::load_mobile(dir + "/mobile.csv");
        std::set<std::int64_t> cells;
        for (const auto& r : records) {
            auto key = geo::cell_of(geo::project(r.pos, frame.ref), frame.grid);
            if (key) cells.insert(frame.grid.index_of(*key));
        }
        return cells.size();
    };
    std::size_t c1 = covered_cells(3, 900);
    std::size_t c2 = covered_cells(10, 900);
    std::size_t c3 = covered_cells(10, 1800);
    CHECK(c1 <= c2);
    CHECK(c2 <= c3);
}

TEST_CASE("fixed series equals the truth map at the station cell") {
    auto frame = small_frame();
    auto cfg = small_config();
    Scenario sc = build_scenario(cfg, frame.grid, frame.ref);
    std::string dir = fresh_dir("pmfuse_synth_fixed");
    generate(sc, dir);
    auto fixed = ingest::load_fixed(dir + "/fixed.csv");
    std::map<std::string, geo::CellKey> station_cell;
    for (const auto& st : sc.stations) station_cell[st.station_id] = st.cell;
    int checked = 0;
    for (const auto& r : fixed) {
        if (r.t < cfg.start) continue;  // map window only (truth grids exist)
        auto tm = truth_map(sc, align::TimeKey{r.t, 300});
        double cell_value = tm.values[frame.grid.index_of(station_cell[r.station_id])];
        CHECK(r.pm25 == doctest::Approx(cell_value).epsilon(0.01));
        ++checked;
    }
    CHECK(checked > 0);
}

TEST_CASE("truth_map analytics") {
    auto frame = small_frame();
    SUBCASE("flat configuration is constant") {
        ScenarioConfig cfg = small_config();
        cfg.truth.n_plumes = 1;
        cfg.truth.plume_amp_min = cfg.truth.plume_amp_max = 0.0;
        cfg.truth.road_amp = 0.0;
        cfg.truth.diurnal_amp = 0.0;
        Scenario sc = build_scenario(cfg, frame.grid, frame.ref);
        auto m = truth_map(sc, align::TimeKey{cfg.start, 300});
        for (double v : m.values)
            CHECK(v == doctest::Approx(cfg.truth.background).epsilon(1e-12));
    }
    SUBCASE("single plume peaks at its center cell and drifts") {
        ScenarioConfig cfg = small_config();
        cfg.truth.n_plumes = 1;
        cfg.truth.plume_amp_min = cfg.truth.plume_amp_max = 40.0;
        cfg.truth.plume_sigma_min = cfg.truth.plume_sigma_max = 600.0;
        cfg.truth.road_amp = 0.0;
        cfg.truth.diurnal_amp = 0.0;
        Scenario sc = build_scenario(cfg, frame.grid, frame.ref);
        REQUIRE(sc.plumes.size() == 1);
        // Make the drift analytic: due east at 1 m/s.
        sc.plumes[0].vx = 1.0;
        sc.plumes[0].vy = 0.0;

        auto argmax_cell = [&](const maps::PollutionMap& m) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < m.values.size(); ++i)
                if (m.values[i] > m.values[best]) best = i;
            return frame.grid.cell_center(frame.grid.key_of(
                static_cast<std::int64_t>(best)));
        };
        auto m0 = truth_map(sc, align::TimeKey{cfg.start, 300});
        geo::ProjectedPoint peak0 = argmax_cell(m0);
        CHECK(std::abs(peak0.x - sc.plumes[0].x) <= frame.grid.cell_size);
        CHECK(std::abs(peak0.y - sc.plumes[0].y) <= frame.grid.cell_size);

        // After 2400 s the center moved 2400 m east (within grid bounds).
        auto m1 = truth_map(sc, align::TimeKey{cfg.start + 2400, 300});
        geo::ProjectedPoint peak1 = argmax_cell(m1);
        double expected_x = sc.plumes[0].x + 2400.0;
        if (expected_x < frame.grid.origin.x + 8 * 500.0 - 250.0) {
            CHECK(std::abs(peak1.x - expected_x) <= frame.grid.cell_size);
            CHECK(std::abs(peak1.y - sc.plumes[0].y) <= frame.grid.cell_size);
        }
    }
}

TEST_CASE("generated files conform to the ingest schemas and the MANIFEST") {
    auto frame = small_frame();
    auto cfg = small_config();
    Scenario sc = build_scenario(cfg, frame.grid, frame.ref);
    std::string dir = fresh_dir("pmfuse_synth_schema");
    auto files = generate(sc, dir);

    CHECK_NOTHROW(ingest::load_mobile(dir + "/mobile.csv", true));
    CHECK_NOTHROW(ingest::load_mobile(dir + "/colocation.csv", true));
    CHECK_NOTHROW(ingest::load_fixed(dir + "/fixed.csv", true));
    CHECK(ingest::load_stations(dir + "/stations.csv").size() ==
          static_cast<std::size_t>(cfg.n_stations));
    auto features = ingest::load_features(dir + "/features.csv");
    CHECK(!features.polylines.empty());
    CHECK(!features.rects.empty());
    CHECK_NOTHROW(
        ingest::rasterize_features(features, frame.grid, frame.ref));

    // MANIFEST checksums verify against the files on disk.
    std::string manifest = read_text_file(dir + "/MANIFEST");
    std::istringstream ss(manifest);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        auto sp = line.find("  ");
        REQUIRE(sp != std::string::npos);
        std::string sum = line.substr(0, sp);
        std::string name = line.substr(sp + 2);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(file_checksum(dir + "/" + name)));
        CHECK(sum == buf);
        ++rows;
    }
    CHECK(rows == files.size() - 1);  // every file except MANIFEST itself
}
