#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pmfuse/ingest.hpp"
#include "pmfuse/learn.hpp"
#include "pmfuse/metrics.hpp"

namespace pmfuse::calibrate {

// The four correction models, in report row order.
enum class ModelKind { linear, rh_linear, rh_t_linear, boosted };

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

// One matched (LCS interval mean, reference value) pair.
struct CoLocationPair {
    std::int64_t interval_start = 0;
    double pm25_lcs = 0.0;  // interval mean of raw LCS readings
    double rh = 0.0;        // interval means of the co-collected RH / T
    double temp = 0.0;
    double pm25_fixed = 0.0;
};

struct CoLocationSet {
    std::int64_t interval_len = 0;
    std::vector<CoLocationPair> pairs;
};

// Mobile records averaged per interval and paired with the fixed value of
// the same interval; intervals missing either side are dropped.
CoLocationSet match_colocation(const std::vector<ingest::MobileRecord>& mobile,
                               const std::vector<ingest::FixedRecord>& fixed,
                               std::int64_t interval_len);

struct CalibrationModel {
    ModelKind kind = ModelKind::linear;
    // linear: a, b | rh_linear: j1, j2, j3 | rh_t_linear: k1, k2, k3, k4
    std::vector<double> coef;
    std::shared_ptr<const learn::Regressor> boosted;  // set iff kind == boosted

    // Calibrated concentration, clamped to the sensor's valid range [0, 500].
    double apply(double pm25_lcs, double rh, double temp) const;
    double apply(const ingest::MobileRecord& rec) const {
        return apply(rec.pm25_raw, rec.rh, rec.temp);
    }
};

CalibrationModel fit(ModelKind kind, const CoLocationSet& train,
                     const learn::GbtConfig& gbt_cfg = learn::GbtConfig{});

struct SplitResult {
    CoLocationSet train;
    CoLocationSet test;
};

// Deterministic 80/20 (or any fraction) split over matched pairs; uniformly
// random under the seed, or chronological when requested.
SplitResult split_pairs(const CoLocationSet& set, double train_fraction,
                        std::uint64_t seed, bool chronological = false);

struct CalibrationReport {
    // One row per model kind, in (a)..(d) order: linear, rh_linear,
    // rh_t_linear, boosted.
    std::vector<std::pair<ModelKind, metrics::MetricReport>> rows;
    std::string csv() const;
};

CalibrationReport evaluate(const std::vector<CalibrationModel>& models,
                           const CoLocationSet& test);

// Symmetric unit-diagonal Pearson matrix across co-located device series
// (series must be aligned on the same interval grid).
std::vector<std::vector<double>> cross_device_correlation(
    const std::vector<std::vector<double>>& series);

void save_calibration(const CalibrationModel& m, const std::string& path);
CalibrationModel load_calibration(const std::string& path);

}  // namespace pmfuse::calibrate
