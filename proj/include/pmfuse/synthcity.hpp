#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmfuse/align.hpp"
#include "pmfuse/geo.hpp"
#include "pmfuse/maps.hpp"
#include "pmfuse/rng.hpp"

namespace pmfuse::synthcity {

struct SensorSpec {
    double bias = 1.4;         // fleet-wide multiplicative factor
    double noise_std = 2.0;    // additive gaussian, ug/m3
    double rh_coef = 0.005;    // per (RH - 60) percent
    double rh_quad = 0.00025;  // per (RH - 60)^2
    double temp_coef = 0.008;  // per (T - 20) degC
    double fleet_spread = 0.04;  // per-taxi factor std around bias
    // Co-location devices carry these factors instead of the fleet bias;
    // the single fleet-wide calibration therefore corrects the humidity
    // structure but not the fleet's own elevation, which is what the
    // mapping model is for.
    std::vector<double> colo_device_factors = {1.0, 1.03, 1.06};
};

struct TruthSpec {
    double background = 35.0;  // ug/m3
    int n_plumes = 6;
    double plume_amp_min = 15.0, plume_amp_max = 45.0;
    double plume_sigma_min = 300.0, plume_sigma_max = 800.0;
    double plume_drift_max = 1.5;  // m/s
    double road_amp = 12.0;
    double road_decay_m = 150.0;
    double diurnal_amp = 0.25;
    // Sub-hourly oscillation of each plume's strength, with its own phase
    // and period per plume. The spatial pattern therefore fluctuates within
    // the hour: coarse temporal aggregation smears it for the fixed series
    // while taxi visit instants alias it, which is what keeps the finest
    // interval competitive in the resolution sweep.
    double gust_amp = 0.35;
    double gust_period_s = 3000.0;
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    std::int64_t start = 1677661200;  // 2023-03-01T09:00:00Z
    std::int64_t duration_s = 3600;   // map window
    std::int64_t colocation_s = 172800;  // window ending at `start`
    int n_stations = 24;
    int n_taxis = 60;
    double taxi_speed_min = 8.0, taxi_speed_max = 14.0;  // m/s
    double road_keep_base = 0.5;    // extra-edge keep probability at the rim
    double road_keep_center = 0.45; // added toward the center
    int n_buildings = 150;
    TruthSpec truth;
    SensorSpec sensor;

    void validate() const;
};

struct Plume {
    double x = 0.0, y = 0.0;  // center at t = start
    double amp = 0.0, sigma = 0.0;
    double vx = 0.0, vy = 0.0;      // drift m/s
    double gust_phase = 0.0;        // per-plume oscillation
    double gust_period_s = 3000.0;
};

struct RoadEdge {
    geo::ProjectedPoint a, b;
    int cls = 2;  // 0 primary, 1 secondary, 2 tertiary
};

struct StationPlace {
    std::string station_id;
    geo::CellKey cell;
    geo::ProjectedPoint pos;  // cell center
};

// The fully materialized deterministic world: road graph, truth field
// parameters, station placement. Everything downstream derives from this.
struct Scenario {
    ScenarioConfig cfg;
    geo::GeoPoint ref;
    geo::GridSpec grid;
    std::vector<Plume> plumes;
    double diurnal_phase = 0.0, rh_phase = 0.0, temp_phase = 0.0;
    double gust_phase = 0.0;
    std::vector<RoadEdge> roads;
    // node adjacency over the cell-center lattice (index = cell index)
    std::vector<std::vector<std::int32_t>> adjacency;
    std::vector<StationPlace> stations;

    double truth(const geo::ProjectedPoint& p, std::int64_t t) const;
    double rh_at(std::int64_t t) const;    // shared fleet-wide humidity
    double temp_at(std::int64_t t) const;  // shared temperature
    // Raw LCS reading of `truth_value` under this scenario's sensor model.
    double sensor_read(double truth_value, std::int64_t t, double device_factor,
                       Rng& noise) const;
    double road_distance(const geo::ProjectedPoint& p) const;
};

Scenario build_scenario(const ScenarioConfig& cfg, const geo::GridSpec& grid,
                        const geo::GeoPoint& ref);

// Exact truth field sampled at cell centers at the interval start.
maps::PollutionMap truth_map(const Scenario& sc, const align::TimeKey& time);

// Writes stations.csv, fixed.csv, colocation.csv, mobile.csv, features.csv,
// per-slice truth grids and a MANIFEST checksum list into out_dir. Returns
// the file names written (relative to out_dir).
std::vector<std::string> generate(const Scenario& sc, const std::string& out_dir);

}  // namespace pmfuse::synthcity
