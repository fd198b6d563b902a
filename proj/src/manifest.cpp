#include "pmfuse/manifest.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>

#include "pmfuse/errors.hpp"
#include "pmfuse/util.hpp"

namespace pmfuse {

namespace {

const char* kKnownKeys[] = {
    "grid.origin_lat", "grid.origin_lon", "grid.cell_size_m", "grid.n_cols",
    "grid.n_rows",
    "inputs.fixed", "inputs.mobile", "inputs.colocation", "inputs.stations",
    "inputs.features",
    "scenario.enabled", "scenario.start", "scenario.duration_s",
    "scenario.colocation_s", "scenario.n_stations", "scenario.n_taxis",
    "scenario.n_plumes", "scenario.bias", "scenario.noise_std",
    "scenario.rh_coef", "scenario.rh_quad", "scenario.temp_coef",
    "scenario.fleet_spread", "scenario.background", "scenario.road_amp",
    "scenario.road_decay_m", "scenario.diurnal_amp", "scenario.gust_amp",
    "scenario.gust_period_s", "scenario.n_buildings",
    "scenario.road_keep_base", "scenario.road_keep_center",
    "scenario.taxi_speed_min", "scenario.taxi_speed_max",
    "scenario.plume_amp_min", "scenario.plume_amp_max",
    "scenario.plume_sigma_min", "scenario.plume_sigma_max",
    "scenario.plume_drift_max",
    "calibration.interval_s", "calibration.train_fraction", "calibration.split",
    "calibration.reference_station",
    "sweep.distances_m", "sweep.intervals_s", "sweep.tolerance", "sweep.min_pairs",
    "fuse.n_mobile_floor", "fuse.cv_folds", "fuse.scheme",
    "models.gbt.n_trees", "models.gbt.depth", "models.gbt.learning_rate",
    "models.forest.n_trees", "models.forest.depth", "models.knn.k",
    "models.lasso.lambda",
    "map.idw_power", "map.idw_k", "map.sources", "map.png",
    "seed.scenario", "seed.calibration_split", "seed.cv_folds", "seed.forest",
    "out.dir",
};

bool known_key(const std::string& key) {
    for (const char* k : kKnownKeys)
        if (key == k) return true;
    return false;
}

std::string trim(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string_view::npos) return "";
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

Manifest Manifest::parse_file(const std::string& path) {
    namespace fs = std::filesystem;
    if (!fs::exists(path))
        throw ValidationError("manifest not found: " + path);
    std::string dir = fs::path(path).parent_path().string();
    if (dir.empty()) dir = ".";
    return parse_text(read_text_file(path), dir);
}

Manifest Manifest::parse_text(const std::string& text, const std::string& dir) {
    Manifest m;
    m.dir_ = dir;
    std::vector<std::string> offending;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line(text.data() + pos,
                              (nl == std::string::npos ? text.size() : nl) - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            offending.push_back("line " + std::to_string(lineno) + " (no '=')");
            continue;
        }
        std::string key = trim(std::string_view(stripped).substr(0, eq));
        std::string value = trim(std::string_view(stripped).substr(eq + 1));
        if (!known_key(key)) {
            offending.push_back(key);
            continue;
        }
        if (m.values_.count(key)) {
            offending.push_back(key + " (duplicate)");
            continue;
        }
        m.values_[key] = value;
    }
    if (!offending.empty()) {
        std::string msg = "manifest has invalid keys:";
        for (const auto& k : offending) msg += " " + k;
        throw ValidationError(msg);
    }
    return m;
}

void Manifest::bad_key(const std::string& key, const std::string& why) const {
    throw ValidationError("manifest key '" + key + "': " + why);
}

std::string Manifest::get_string(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
}

std::string Manifest::require_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) bad_key(key, "missing");
    return it->second;
}

double Manifest::get_double(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    auto v = parse_double(it->second);
    if (!v) bad_key(key, "not a number: " + it->second);
    return *v;
}

std::int64_t Manifest::get_int(const std::string& key, std::int64_t def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    auto v = parse_int(it->second);
    if (!v) bad_key(key, "not an integer: " + it->second);
    return *v;
}

bool Manifest::get_bool(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    bad_key(key, "expected true/false: " + it->second);
}

std::uint64_t Manifest::get_seed(const std::string& key, std::uint64_t def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    auto v = parse_int(it->second);
    if (!v || *v < 0) bad_key(key, "not a seed: " + it->second);
    return static_cast<std::uint64_t>(*v);
}

std::int64_t Manifest::get_time(const std::string& key, std::int64_t def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    auto v = parse_iso8601_utc(it->second);
    if (!v) bad_key(key, "not an ISO-8601 UTC timestamp: " + it->second);
    return *v;
}

std::vector<double> Manifest::get_double_list(const std::string& key,
                                              const std::vector<double>& def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<double> out;
    for (auto part : split_view(it->second, ',')) {
        auto v = parse_double(trim(part));
        if (!v) bad_key(key, "bad list entry");
        out.push_back(*v);
    }
    if (out.empty()) bad_key(key, "empty list");
    return out;
}

std::vector<std::int64_t> Manifest::get_int_list(
    const std::string& key, const std::vector<std::int64_t>& def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<std::int64_t> out;
    for (auto part : split_view(it->second, ',')) {
        auto v = parse_int(trim(part));
        if (!v) bad_key(key, "bad list entry");
        out.push_back(*v);
    }
    if (out.empty()) bad_key(key, "empty list");
    return out;
}

std::vector<std::string> Manifest::get_string_list(
    const std::string& key, const std::vector<std::string>& def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<std::string> out;
    for (auto part : split_view(it->second, ',')) out.push_back(trim(part));
    return out;
}

std::string Manifest::resolve_path(const std::string& value) const {
    namespace fs = std::filesystem;
    fs::path p(value);
    if (p.is_absolute()) return value;
    return (fs::path(dir_) / p).string();
}

void Manifest::override_value(const std::string& key, const std::string& value) {
    if (!known_key(key))
        throw ValidationError("unknown manifest key in override: " + key);
    values_[key] = value;
}

}  // namespace pmfuse
