#include "pmfuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "pmfuse/align.hpp"
#include "pmfuse/calibrate.hpp"
#include "pmfuse/errors.hpp"
#include "pmfuse/fuse.hpp"
#include "pmfuse/ingest.hpp"
#include "pmfuse/learn.hpp"
#include "pmfuse/maps.hpp"
#include "pmfuse/metrics.hpp"
#include "pmfuse/rng.hpp"
#include "pmfuse/synthcity.hpp"
#include "pmfuse/util.hpp"

namespace pmfuse::pipeline {

namespace fs = std::filesystem;

GridFrame make_frame(double origin_lat, double origin_lon, double cell_size_m,
                     std::int32_t n_cols, std::int32_t n_rows) {
    constexpr double kRadToDeg = 180.0 / std::numbers::pi;
    GridFrame f;
    double half_h = n_rows * cell_size_m / 2.0;
    double half_w = n_cols * cell_size_m / 2.0;
    f.ref.lat = origin_lat + half_h / geo::kEarthRadiusM * kRadToDeg;
    double coslat = std::cos(f.ref.lat / kRadToDeg);
    f.ref.lon = origin_lon + half_w / (geo::kEarthRadiusM * coslat) * kRadToDeg;
    f.grid.origin = geo::project(geo::GeoPoint{origin_lat, origin_lon}, f.ref);
    f.grid.cell_size = cell_size_m;
    f.grid.n_cols = n_cols;
    f.grid.n_rows = n_rows;
    f.grid.validate();
    return f;
}

GridFrame frame_from_manifest(const Manifest& m) {
    double lat = m.get_double("grid.origin_lat", 23.05);
    double lon = m.get_double("grid.origin_lon", 113.20);
    double cell = m.get_double("grid.cell_size_m", 500.0);
    auto n_cols = static_cast<std::int32_t>(m.get_int("grid.n_cols", 12));
    auto n_rows = static_cast<std::int32_t>(m.get_int("grid.n_rows", 12));
    return make_frame(lat, lon, cell, n_cols, n_rows);
}

std::string out_dir_of(const Manifest& m, const RunOptions& opt) {
    if (!opt.out_dir.empty()) return opt.out_dir;
    return m.resolve_path(m.get_string("out.dir", "out"));
}

namespace {

struct StageLog {
    std::string stage;
    std::vector<std::string> lines;

    void input(const std::string& path) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(file_checksum(path)));
        lines.push_back("input " + std::string(buf) + "  " + path);
    }
    void note(const std::string& s) { lines.push_back(s); }
    // Stage logs carry no wall-clock content: reruns must be byte-identical.
    std::string write(const std::string& out_dir) {
        fs::create_directories(out_dir + "/logs");
        std::ostringstream ss;
        ss << "stage " << stage << "\n";
        for (const auto& l : lines) ss << l << "\n";
        std::string rel = "logs/" + stage + ".log";
        write_text_file(out_dir + "/" + rel, ss.str());
        return rel;
    }
};

struct Inputs {
    std::string fixed, mobile, colocation, stations, features;
};

Inputs input_paths(const Manifest& m, const RunOptions& opt) {
    Inputs in;
    bool synth = m.get_bool("scenario.enabled", false);
    std::string scen_dir = out_dir_of(m, opt) + "/scenario";
    auto pick = [&](const char* key, const char* fallback) {
        if (m.has(key)) return m.resolve_path(m.require_string(key));
        if (synth) return scen_dir + "/" + fallback;
        throw ValidationError(std::string("manifest key '") + key +
                              "': missing (no scenario.enabled fallback)");
    };
    in.fixed = pick("inputs.fixed", "fixed.csv");
    in.mobile = pick("inputs.mobile", "mobile.csv");
    in.colocation = pick("inputs.colocation", "colocation.csv");
    in.stations = pick("inputs.stations", "stations.csv");
    in.features = pick("inputs.features", "features.csv");
    return in;
}

void require_file(const std::string& path, const std::string& key) {
    if (!fs::exists(path))
        throw ValidationError("manifest key '" + key + "': path does not exist: " +
                              path);
}

synthcity::ScenarioConfig scenario_config(const Manifest& m) {
    synthcity::ScenarioConfig cfg;
    cfg.seed = m.get_seed("seed.scenario", 1);
    cfg.start = m.get_time("scenario.start", cfg.start);
    cfg.duration_s = m.get_int("scenario.duration_s", cfg.duration_s);
    cfg.colocation_s = m.get_int("scenario.colocation_s", cfg.colocation_s);
    cfg.n_stations = static_cast<int>(m.get_int("scenario.n_stations", cfg.n_stations));
    cfg.n_taxis = static_cast<int>(m.get_int("scenario.n_taxis", cfg.n_taxis));
    cfg.truth.n_plumes =
        static_cast<int>(m.get_int("scenario.n_plumes", cfg.truth.n_plumes));
    cfg.truth.background = m.get_double("scenario.background", cfg.truth.background);
    cfg.truth.road_amp = m.get_double("scenario.road_amp", cfg.truth.road_amp);
    cfg.truth.road_decay_m =
        m.get_double("scenario.road_decay_m", cfg.truth.road_decay_m);
    cfg.truth.diurnal_amp = m.get_double("scenario.diurnal_amp", cfg.truth.diurnal_amp);
    cfg.truth.gust_amp = m.get_double("scenario.gust_amp", cfg.truth.gust_amp);
    cfg.truth.gust_period_s =
        m.get_double("scenario.gust_period_s", cfg.truth.gust_period_s);
    cfg.truth.plume_amp_min =
        m.get_double("scenario.plume_amp_min", cfg.truth.plume_amp_min);
    cfg.truth.plume_amp_max =
        m.get_double("scenario.plume_amp_max", cfg.truth.plume_amp_max);
    cfg.truth.plume_sigma_min =
        m.get_double("scenario.plume_sigma_min", cfg.truth.plume_sigma_min);
    cfg.truth.plume_sigma_max =
        m.get_double("scenario.plume_sigma_max", cfg.truth.plume_sigma_max);
    cfg.truth.plume_drift_max =
        m.get_double("scenario.plume_drift_max", cfg.truth.plume_drift_max);
    cfg.sensor.bias = m.get_double("scenario.bias", cfg.sensor.bias);
    cfg.sensor.noise_std = m.get_double("scenario.noise_std", cfg.sensor.noise_std);
    cfg.sensor.rh_coef = m.get_double("scenario.rh_coef", cfg.sensor.rh_coef);
    cfg.sensor.rh_quad = m.get_double("scenario.rh_quad", cfg.sensor.rh_quad);
    cfg.sensor.temp_coef = m.get_double("scenario.temp_coef", cfg.sensor.temp_coef);
    cfg.sensor.fleet_spread =
        m.get_double("scenario.fleet_spread", cfg.sensor.fleet_spread);
    cfg.n_buildings = static_cast<int>(m.get_int("scenario.n_buildings", cfg.n_buildings));
    cfg.road_keep_base = m.get_double("scenario.road_keep_base", cfg.road_keep_base);
    cfg.road_keep_center =
        m.get_double("scenario.road_keep_center", cfg.road_keep_center);
    cfg.taxi_speed_min = m.get_double("scenario.taxi_speed_min", cfg.taxi_speed_min);
    cfg.taxi_speed_max = m.get_double("scenario.taxi_speed_max", cfg.taxi_speed_max);
    return cfg;
}

learn::GbtConfig gbt_config(const Manifest& m) {
    learn::GbtConfig cfg;
    cfg.n_trees = static_cast<int>(m.get_int("models.gbt.n_trees", 300));
    cfg.max_depth = static_cast<int>(m.get_int("models.gbt.depth", 4));
    cfg.learning_rate = m.get_double("models.gbt.learning_rate", 0.1);
    return cfg;
}

fuse::ModelHyperparams hyperparams(const Manifest& m) {
    fuse::ModelHyperparams hp;
    hp.gbt = gbt_config(m);
    hp.forest.n_trees = static_cast<int>(m.get_int("models.forest.n_trees", 200));
    hp.forest.max_depth = static_cast<int>(m.get_int("models.forest.depth", 8));
    hp.knn_k = static_cast<int>(m.get_int("models.knn.k", 5));
    std::string lambda = m.get_string("models.lasso.lambda", "cv");
    if (lambda != "cv") {
        auto v = parse_double(lambda);
        if (!v)
            throw ValidationError("manifest key 'models.lasso.lambda': expected "
                                  "number or 'cv'");
        hp.lasso_lambda = *v;
    }
    return hp;
}

// Calibrated, projected mobile samples plus the per-device interval means
// needed by the calibration stage.
std::vector<align::CalibratedSample> load_calibrated_mobile(
    const std::string& path, const calibrate::CalibrationModel& model,
    const GridFrame& frame, bool strict, ingest::IngestReport* report) {
    std::vector<align::CalibratedSample> out;
    ingest::IngestReport rep = ingest::stream_mobile(
        path, strict, [&](const ingest::MobileRecord& r) {
            out.push_back(align::CalibratedSample{geo::project(r.pos, frame.ref), r.t,
                                                  model.apply(r)});
        });
    if (report) *report = rep;
    return out;
}

std::vector<align::ProjectedStation> project_stations(
    const std::vector<ingest::StationInfo>& stations, const GridFrame& frame) {
    std::vector<align::ProjectedStation> out;
    out.reserve(stations.size());
    for (const auto& s : stations)
        out.push_back(align::ProjectedStation{s.station_id,
                                              geo::project(s.pos, frame.ref)});
    return out;
}

struct ChosenResolution {
    double distance_m = 500.0;
    std::int64_t interval_s = 300;
};

// The fuse and map stages run at the sweep-chosen resolution when the sweep
// output exists, otherwise at the default 500 m / 5 min.
ChosenResolution chosen_resolution(const std::string& out_dir, StageLog& log) {
    ChosenResolution res;
    std::string path = out_dir + "/sweep.csv";
    if (!fs::exists(path)) {
        log.note("resolution default 500/300 (no sweep.csv)");
        return res;
    }
    std::string text = read_text_file(path);
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.rfind("chosen,", 0) != 0) continue;
        auto f = split_view(line, ',');
        if (f.size() != 3) throw DataError("sweep.csv: bad chosen line");
        auto d = parse_double(f[1]);
        auto iv = parse_int(f[2]);
        if (!d || !iv) throw DataError("sweep.csv: bad chosen line");
        res.distance_m = *d;
        res.interval_s = *iv;
        log.note("resolution from sweep.csv: " + std::string(f[1]) + "/" +
                 std::string(f[2]));
        return res;
    }
    throw DataError("sweep.csv has no chosen line");
}

std::string fmt_checksum_line(const std::string& out_dir, const std::string& rel) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(file_checksum(out_dir + "/" + rel)));
    return std::string(buf) + "  " + rel;
}

}  // namespace

std::vector<std::string> cmd_synth(const Manifest& m, const RunOptions& opt) {
    if (!m.get_bool("scenario.enabled", false))
        throw ValidationError("manifest key 'scenario.enabled': synth stage "
                              "requires scenario.enabled = true");
    std::string out_dir = out_dir_of(m, opt);
    fs::create_directories(out_dir);
    GridFrame frame = frame_from_manifest(m);
    synthcity::ScenarioConfig cfg = scenario_config(m);
    synthcity::Scenario sc = synthcity::build_scenario(cfg, frame.grid, frame.ref);
    std::vector<std::string> files = synthcity::generate(sc, out_dir + "/scenario");

    StageLog log;
    log.stage = "synth";
    log.note("seed " + std::to_string(cfg.seed));
    log.note("stations " + std::to_string(cfg.n_stations) + " taxis " +
             std::to_string(cfg.n_taxis));
    std::vector<std::string> out;
    for (const auto& f : files) out.push_back("scenario/" + f);
    for (const auto& f : out) log.note("output " + f);
    out.push_back(log.write(out_dir));
    return out;
}

std::vector<std::string> cmd_calibrate(const Manifest& m, const RunOptions& opt) {
    std::string out_dir = out_dir_of(m, opt);
    fs::create_directories(out_dir);
    Inputs in = input_paths(m, opt);
    require_file(in.colocation, "inputs.colocation");
    require_file(in.fixed, "inputs.fixed");

    StageLog log;
    log.stage = "calibrate";
    log.input(in.colocation);
    log.input(in.fixed);

    ingest::IngestReport colo_rep, fixed_rep;
    auto colo = ingest::load_mobile(in.colocation, opt.strict, &colo_rep);
    auto fixed_all = ingest::load_fixed(in.fixed, opt.strict, &fixed_rep);

    std::string ref_station = m.get_string("calibration.reference_station", "S00");
    std::vector<ingest::FixedRecord> ref_fixed;
    for (const auto& r : fixed_all)
        if (r.station_id == ref_station) ref_fixed.push_back(r);
    if (ref_fixed.empty())
        throw DataError("no fixed records for reference station " + ref_station);

    std::int64_t interval = m.get_int("calibration.interval_s", 300);
    auto colocated = calibrate::match_colocation(colo, ref_fixed, interval);
    log.note("matched_pairs " + std::to_string(colocated.pairs.size()));

    double frac = m.get_double("calibration.train_fraction", 0.8);
    bool chrono = m.get_string("calibration.split", "random") == "chronological";
    std::uint64_t seed = m.get_seed("seed.calibration_split", 7);
    auto split = calibrate::split_pairs(colocated, frac, seed, chrono);

    learn::GbtConfig gbt = gbt_config(m);
    std::vector<calibrate::CalibrationModel> models;
    for (auto kind : {calibrate::ModelKind::linear, calibrate::ModelKind::rh_linear,
                      calibrate::ModelKind::rh_t_linear, calibrate::ModelKind::boosted})
        models.push_back(calibrate::fit(kind, split.train, gbt));
    calibrate::CalibrationReport report = calibrate::evaluate(models, split.test);

    std::vector<std::string> out;
    write_text_file(out_dir + "/calibration_report.csv", report.csv());
    out.push_back("calibration_report.csv");

    // Best model by held-out MAE becomes the deployed correction.
    std::size_t best = 0;
    for (std::size_t i = 1; i < report.rows.size(); ++i)
        if (report.rows[i].second.mae < report.rows[best].second.mae) best = i;
    const auto& best_model = *std::find_if(
        models.begin(), models.end(), [&](const calibrate::CalibrationModel& cm) {
            return cm.kind == report.rows[best].first;
        });
    calibrate::save_calibration(best_model, out_dir + "/calibration_model.txt");
    out.push_back("calibration_model.txt");
    log.note(std::string("deployed_kind ") +
             calibrate::model_kind_name(best_model.kind));

    // Cross-device correlation vs the reference series (Table 1 layout):
    // per-device interval means restricted to intervals all series share.
    {
        std::map<std::string, std::map<std::int64_t, std::pair<double, int>>> dev;
        for (const auto& r : colo) {
            std::int64_t start = align::TimeKey::of(r.t, interval).interval_start;
            auto& [sum, n] = dev[r.device_id][start];
            sum += r.pm25_raw;
            ++n;
        }
        std::map<std::int64_t, std::pair<double, int>> fix;
        for (const auto& r : ref_fixed) {
            std::int64_t start = align::TimeKey::of(r.t, interval).interval_start;
            auto& [sum, n] = fix[start];
            sum += r.pm25;
            ++n;
        }
        std::set<std::int64_t> common;
        for (const auto& [t, acc] : fix) common.insert(t);
        for (const auto& [id, series] : dev) {
            std::set<std::int64_t> mine;
            for (const auto& [t, acc] : series) mine.insert(t);
            std::set<std::int64_t> both;
            std::set_intersection(common.begin(), common.end(), mine.begin(),
                                  mine.end(), std::inserter(both, both.begin()));
            common = std::move(both);
        }
        if (common.size() >= 2 && !dev.empty()) {
            std::vector<std::string> names = {"AQMS"};
            std::vector<std::vector<double>> series(1);
            for (std::int64_t t : common) {
                auto& acc = fix[t];
                series[0].push_back(acc.first / acc.second);
            }
            for (auto& [id, sm] : dev) {
                names.push_back(id);
                std::vector<double> s;
                for (std::int64_t t : common)
                    s.push_back(sm[t].first / sm[t].second);
                series.push_back(std::move(s));
            }
            auto matrix = calibrate::cross_device_correlation(series);
            std::ostringstream ss;
            ss << "series";
            for (const auto& n : names) ss << ',' << n;
            ss << '\n';
            char buf[32];
            for (std::size_t i = 0; i < names.size(); ++i) {
                ss << names[i];
                for (std::size_t j = 0; j < names.size(); ++j) {
                    std::snprintf(buf, sizeof(buf), ",%.4f", matrix[i][j]);
                    ss << buf;
                }
                ss << '\n';
            }
            write_text_file(out_dir + "/cross_device.csv", ss.str());
            out.push_back("cross_device.csv");
        } else {
            log.note("cross_device skipped: fewer than 2 common intervals");
        }
    }

    // Ingest accounting for this stage's inputs.
    {
        std::ostringstream ss;
        ss << ingest::IngestReport::csv_header() << '\n'
           << colo_rep.csv_row() << '\n'
           << fixed_rep.csv_row() << '\n';
        write_text_file(out_dir + "/ingest_calibrate.csv", ss.str());
        out.push_back("ingest_calibrate.csv");
    }

    for (const auto& f : out) log.note("output " + f);
    out.push_back(log.write(out_dir));
    return out;
}

std::vector<std::string> cmd_sweep(const Manifest& m, const RunOptions& opt) {
    std::string out_dir = out_dir_of(m, opt);
    fs::create_directories(out_dir);
    Inputs in = input_paths(m, opt);
    require_file(in.mobile, "inputs.mobile");
    require_file(in.fixed, "inputs.fixed");
    require_file(in.stations, "inputs.stations");
    std::string model_path = out_dir + "/calibration_model.txt";
    if (!fs::exists(model_path))
        throw ValidationError("sweep requires calibration_model.txt (run calibrate "
                              "first): " + model_path);

    StageLog log;
    log.stage = "sweep";
    log.input(in.mobile);
    log.input(in.fixed);
    log.input(in.stations);
    log.input(model_path);

    GridFrame frame = frame_from_manifest(m);
    auto model = calibrate::load_calibration(model_path);
    ingest::IngestReport mob_rep;
    auto mobile = load_calibrated_mobile(in.mobile, model, frame, opt.strict, &mob_rep);
    auto fixed = ingest::load_fixed(in.fixed, opt.strict);
    auto stations = project_stations(ingest::load_stations(in.stations), frame);

    align::SweepConfig cfg;
    cfg.distances_m = m.get_double_list("sweep.distances_m", cfg.distances_m);
    cfg.intervals_s = m.get_int_list("sweep.intervals_s", cfg.intervals_s);
    cfg.tolerance = m.get_double("sweep.tolerance", cfg.tolerance);
    cfg.min_pairs = static_cast<std::size_t>(
        m.get_int("sweep.min_pairs", static_cast<std::int64_t>(cfg.min_pairs)));

    align::SweepResult res = align::resolution_sweep(mobile, fixed, stations, cfg);
    // Mobile records inside overlapping station squares count toward every
    // square (overlap-keep); flagged here since the choice shapes the
    // pair counts.
    std::string csv = "# overlap_policy=keep_all\n" + res.csv();
    write_text_file(out_dir + "/sweep.csv", csv);

    log.note("mobile_rows_kept " + std::to_string(mob_rep.rows_kept));
    log.note("chosen " + std::to_string(static_cast<std::int64_t>(res.chosen_distance_m)) +
             "/" + std::to_string(res.chosen_interval_s));
    std::vector<std::string> out = {"sweep.csv"};
    for (const auto& f : out) log.note("output " + f);
    out.push_back(log.write(out_dir));
    return out;
}

std::vector<std::string> cmd_fuse(const Manifest& m, const RunOptions& opt) {
    std::string out_dir = out_dir_of(m, opt);
    fs::create_directories(out_dir);
    Inputs in = input_paths(m, opt);
    require_file(in.mobile, "inputs.mobile");
    require_file(in.fixed, "inputs.fixed");
    require_file(in.stations, "inputs.stations");
    require_file(in.features, "inputs.features");
    std::string model_path = out_dir + "/calibration_model.txt";
    if (!fs::exists(model_path))
        throw ValidationError("fuse requires calibration_model.txt (run calibrate "
                              "first): " + model_path);

    StageLog log;
    log.stage = "fuse";
    log.input(in.mobile);
    log.input(in.fixed);
    log.input(in.stations);
    log.input(in.features);
    log.input(model_path);

    GridFrame frame = frame_from_manifest(m);
    auto cal = calibrate::load_calibration(model_path);
    auto mobile = load_calibrated_mobile(in.mobile, cal, frame, opt.strict, nullptr);
    auto fixed = ingest::load_fixed(in.fixed, opt.strict);
    auto stations = project_stations(ingest::load_stations(in.stations), frame);
    auto layers = ingest::rasterize_features(ingest::load_features(in.features),
                                             frame.grid, frame.ref);

    ChosenResolution res = chosen_resolution(out_dir, log);

    std::vector<geo::StationCell> squares;
    for (const auto& st : stations)
        squares.push_back(geo::StationCell{st.station_id, st.pos, res.distance_m / 2.0});
    auto samples = align::aggregate(mobile, squares, res.interval_s);
    align::join_fixed(samples, fixed, res.interval_s);

    fuse::TableConfig tcfg;
    tcfg.n_mobile_floor =
        static_cast<std::size_t>(m.get_int("fuse.n_mobile_floor", 3));
    fuse::TrainingTable table =
        fuse::build_table(samples, layers, stations, frame.grid, tcfg);
    log.note("training_rows " + std::to_string(table.rows.size()));
    if (table.stations_outside_grid > 0)
        log.note("stations_outside_grid " +
                 std::to_string(table.stations_outside_grid));

    std::uint64_t seed = m.get_seed("seed.cv_folds", 11);
    fuse::ModelHyperparams hp = hyperparams(m);
    int folds = static_cast<int>(m.get_int("fuse.cv_folds", 5));
    fuse::CvScheme scheme = m.get_string("fuse.scheme", "cv") == "loso"
                                ? fuse::CvScheme::leave_one_station_out
                                : fuse::CvScheme::k_fold;
    fuse::ModelComparison cmp = fuse::compare_models(table, seed, hp, folds, scheme);
    write_text_file(out_dir + "/model_comparison.csv", cmp.csv());
    log.note("best_model " + cmp.best);

    auto deployed = fuse::fit_kind(cmp.best, table, m.get_seed("seed.forest", 13), hp);
    learn::save_model(*deployed, out_dir + "/mapping_model.txt");

    // Gain accounting follows the boosted model (refit when the winner is
    // not tree-based, so the report always exists).
    std::string gain_model = cmp.best;
    if (cmp.best == "gbt" || cmp.best == "forest") {
        write_text_file(out_dir + "/gain_report.csv", fuse::gain_report_csv(*deployed));
    } else {
        auto gbt = fuse::fit_kind("gbt", table, m.get_seed("seed.forest", 13), hp);
        write_text_file(out_dir + "/gain_report.csv", fuse::gain_report_csv(*gbt));
        gain_model = "gbt";
    }
    log.note("gain_model " + gain_model);

    // Mapped concentrations on the tessellation at the chosen interval.
    auto grid_samples = align::aggregate(mobile, frame.grid, res.interval_s);
    auto mapped = fuse::predict_mapped(*deployed, grid_samples, layers, frame.grid, tcfg);
    write_text_file(out_dir + "/mapped.csv", fuse::mapped_csv(mapped));
    log.note("mapped_rows " + std::to_string(mapped.size()));

    std::vector<std::string> out = {"model_comparison.csv", "mapping_model.txt",
                                    "gain_report.csv", "mapped.csv"};
    for (const auto& f : out) log.note("output " + f);
    out.push_back(log.write(out_dir));
    return out;
}

std::vector<std::string> cmd_map(const Manifest& m, const RunOptions& opt) {
    std::string out_dir = out_dir_of(m, opt);
    fs::create_directories(out_dir);
    Inputs in = input_paths(m, opt);
    require_file(in.mobile, "inputs.mobile");
    require_file(in.fixed, "inputs.fixed");
    require_file(in.stations, "inputs.stations");
    std::string cal_path = out_dir + "/calibration_model.txt";
    std::string mapped_path = out_dir + "/mapped.csv";
    if (!fs::exists(cal_path))
        throw ValidationError("map requires calibration_model.txt: " + cal_path);
    if (!fs::exists(mapped_path))
        throw ValidationError("map requires mapped.csv (run fuse first): " +
                              mapped_path);

    StageLog log;
    log.stage = "map";
    log.input(in.mobile);
    log.input(in.fixed);
    log.input(in.stations);
    log.input(cal_path);
    log.input(mapped_path);

    GridFrame frame = frame_from_manifest(m);
    auto cal = calibrate::load_calibration(cal_path);
    auto mobile = load_calibrated_mobile(in.mobile, cal, frame, opt.strict, nullptr);
    auto fixed = ingest::load_fixed(in.fixed, opt.strict);
    auto stations = project_stations(ingest::load_stations(in.stations), frame);

    ChosenResolution res = chosen_resolution(out_dir, log);
    maps::IdwConfig idw_cfg;
    idw_cfg.power = m.get_double("map.idw_power", 2.0);
    idw_cfg.k_nearest = static_cast<int>(m.get_int("map.idw_k", 0));
    idw_cfg.threads = opt.threads;
    bool png = m.get_bool("map.png", false);
    auto sources = m.get_string_list("map.sources", {"fixed", "mobile", "mapped"});

    // Mapped predictions from the fuse stage.
    std::map<std::int64_t, std::vector<std::pair<geo::CellKey, double>>> mapped_by_t;
    {
        std::string text = read_text_file(mapped_path);
        std::istringstream ss(text);
        std::string line;
        if (!std::getline(ss, line) || line != "col,row,interval_start,pm25,source")
            throw DataError("mapped.csv: unexpected header");
        while (std::getline(ss, line)) {
            if (line.empty()) continue;
            auto f = split_view(line, ',');
            if (f.size() != 5) throw DataError("mapped.csv: bad row: " + line);
            auto col = parse_int(f[0]);
            auto row = parse_int(f[1]);
            auto t = parse_int(f[2]);
            auto v = parse_double(f[3]);
            if (!col || !row || !t || !v)
                throw DataError("mapped.csv: bad row: " + line);
            mapped_by_t[*t].push_back(
                {geo::CellKey{static_cast<std::int32_t>(*col),
                              static_cast<std::int32_t>(*row)},
                 *v});
        }
    }

    // Mobile cell means per interval on the tessellation.
    auto grid_samples = align::aggregate(mobile, frame.grid, res.interval_s);
    std::map<std::int64_t, std::vector<std::pair<geo::CellKey, double>>> mobile_by_t;
    for (const auto& s : grid_samples)
        mobile_by_t[s.time.interval_start].push_back({*s.cell, s.stats.mean});

    // Fixed station values per interval.
    std::map<std::int64_t, std::map<std::string, std::pair<double, int>>> fixed_acc;
    for (const auto& r : fixed) {
        std::int64_t start = align::TimeKey::of(r.t, res.interval_s).interval_start;
        auto& [sum, n] = fixed_acc[start][r.station_id];
        sum += r.pm25;
        ++n;
    }
    std::map<std::string, geo::ProjectedPoint> station_pos;
    for (const auto& st : stations) station_pos[st.station_id] = st.pos;

    // The analysis window: intervals with mobile data (the mobile fleet
    // defines when high-resolution mapping is possible).
    std::vector<std::string> out;
    std::map<maps::Source, std::vector<maps::PollutionMap>> products;
    std::size_t skipped = 0;
    for (const auto& [t, cell_means] : mobile_by_t) {
        auto fx = fixed_acc.find(t);
        if (fx == fixed_acc.end()) {
            ++skipped;
            continue;
        }
        std::vector<maps::WeightedPoint> station_values;
        for (const auto& [sid, acc] : fx->second) {
            auto it = station_pos.find(sid);
            if (it == station_pos.end()) continue;
            station_values.push_back(
                maps::WeightedPoint{it->second, acc.first / acc.second});
        }
        if (station_values.empty()) {
            ++skipped;
            continue;
        }
        align::TimeKey tk{t, res.interval_s};
        for (const auto& src : sources) {
            if (src == "fixed") {
                products[maps::Source::fixed].push_back(
                    maps::build_fixed_map(station_values, frame.grid, tk, idw_cfg));
            } else if (src == "mobile") {
                products[maps::Source::mobile].push_back(
                    maps::build_mobile_map(cell_means, frame.grid, tk, idw_cfg));
            } else if (src == "mapped") {
                auto mp = mapped_by_t.find(t);
                const std::vector<std::pair<geo::CellKey, double>> empty;
                products[maps::Source::mapped].push_back(maps::build_mapped_map(
                    mp == mapped_by_t.end() ? empty : mp->second, station_values,
                    frame.grid, tk, idw_cfg));
            } else {
                throw ValidationError("manifest key 'map.sources': unknown source " +
                                      src);
            }
        }
    }
    if (products.empty())
        throw DataError("map stage: no interval has both mobile and fixed data");
    if (skipped > 0)
        log.note("intervals_skipped " + std::to_string(skipped));

    std::ostringstream stats_csv;
    stats_csv << maps::MapStats::csv_header() << '\n';
    std::ostringstream var_csv;
    var_csv << "source,mean_pct,std_pct,steps_used,steps_skipped\n";
    std::map<maps::Source, std::vector<maps::MapStats>> stats_by_source;
    for (const auto& [source, slices] : products) {
        for (const auto& map : slices) {
            std::string name = maps::PollutionMap::filename(
                source, map.time.interval_start, map.time.interval_len);
            write_text_file(out_dir + "/" + name, map.csv());
            out.push_back(name);
            if (png) {
                std::string png_name = name.substr(0, name.size() - 4) + ".png";
                maps::write_map_png(map, out_dir + "/" + png_name);
                out.push_back(png_name);
            }
        }
        maps::SeriesStats ss = maps::series_stats(slices);
        for (const auto& st : ss.per_slice) stats_csv << st.csv_row() << '\n';
        stats_by_source[source] = ss.per_slice;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%zu,%zu",
                      maps::source_name(source), ss.variation.mean_pct,
                      ss.variation.std_pct, ss.variation.steps_used,
                      ss.variation.steps_skipped);
        var_csv << buf << '\n';
    }
    write_text_file(out_dir + "/map_stats.csv", stats_csv.str());
    out.push_back("map_stats.csv");
    write_text_file(out_dir + "/variation.csv", var_csv.str());
    out.push_back("variation.csv");

    if (stats_by_source.count(maps::Source::fixed) &&
        stats_by_source.count(maps::Source::mobile) &&
        stats_by_source.count(maps::Source::mapped)) {
        maps::BiasReport bias = maps::bias_report(stats_by_source[maps::Source::fixed],
                                                  stats_by_source[maps::Source::mobile],
                                                  stats_by_source[maps::Source::mapped]);
        write_text_file(out_dir + "/bias_report.csv", bias.csv());
        out.push_back("bias_report.csv");
    }

    for (const auto& f : out) log.note("output " + f);
    out.push_back(log.write(out_dir));
    return out;
}

std::vector<std::string> cmd_all(const Manifest& m, const RunOptions& opt) {
    std::string out_dir = out_dir_of(m, opt);
    fs::create_directories(out_dir);
    std::vector<std::string> all;
    auto append = [&](std::vector<std::string> files) {
        all.insert(all.end(), files.begin(), files.end());
    };
    if (m.get_bool("scenario.enabled", false)) append(cmd_synth(m, opt));
    append(cmd_calibrate(m, opt));
    append(cmd_sweep(m, opt));
    append(cmd_fuse(m, opt));
    append(cmd_map(m, opt));

    std::sort(all.begin(), all.end());
    std::ostringstream ss;
    for (const auto& rel : all) ss << fmt_checksum_line(out_dir, rel) << '\n';
    write_text_file(out_dir + "/run_manifest.txt", ss.str());
    all.push_back("run_manifest.txt");
    return all;
}

}  // namespace pmfuse::pipeline
