#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pmfuse/align.hpp"
#include "pmfuse/geo.hpp"
#include "pmfuse/ingest.hpp"
#include "pmfuse/learn.hpp"

namespace pmfuse::fuse {

// Regressor inputs per (cell, interval): mobile stats plus the urban layer
// values of the cell; identity kept as metadata only.
struct FeatureRow {
    std::string station_id;            // station-keyed training rows
    std::optional<geo::CellKey> cell;  // tessellation-keyed prediction rows
    align::TimeKey time;
    std::vector<double> features;
    double target = 0.0;  // fixed value; meaningful for training rows only
};

struct TrainingTable {
    std::vector<std::string> feature_names;
    std::vector<FeatureRow> rows;
    std::size_t stations_outside_grid = 0;  // stations with no feature cell

    learn::Dataset dataset() const;
};

inline constexpr const char* kMeanMobileFeature = "mean_mobile";

struct TableConfig {
    std::size_t n_mobile_floor = 3;  // min mobile records per training row
};

// One row per station-keyed sample that has a fixed value and meets the
// n_mobile floor; urban features are looked up at the grid cell containing
// the station. Station squares may lie outside the tessellation; such
// stations are counted and skipped.
TrainingTable build_table(const std::vector<align::CellSample>& samples,
                          const std::vector<ingest::UrbanFeatureLayer>& layers,
                          const std::vector<align::ProjectedStation>& stations,
                          const geo::GridSpec& grid, const TableConfig& cfg);

struct ModelHyperparams {
    learn::GbtConfig gbt;
    learn::ForestConfig forest;
    int knn_k = 5;
    std::optional<double> lasso_lambda;  // empty = choose by 5-fold CV
};

enum class CvScheme { k_fold, leave_one_station_out };

struct ModelScore {
    std::string model;  // learn kind name
    bool failed = false;
    std::string failure;
    double mae = 0.0;
    double mape = 0.0;  // fraction
    double r = 0.0;
};

struct ModelComparison {
    std::vector<ModelScore> scores;  // Table row order: gbt, forest, ols, lasso, knn, average
    std::string best;                // argmin MAE over non-failed kinds
    CvScheme scheme = CvScheme::k_fold;
    int folds = 5;
    std::uint64_t seed = 0;
    std::vector<std::size_t> fold_of_row;  // shared across all kinds

    std::string csv() const;  // model,mae,mape,r (failed kinds print nan)
};

// Cross-validated comparison of all regressor kinds on identical folds.
// Fold assignment hashes row identity (station, interval) with the seed, so
// it is invariant to row order.
ModelComparison compare_models(const TrainingTable& table, std::uint64_t seed,
                               const ModelHyperparams& hp = ModelHyperparams{},
                               int folds = 5, CvScheme scheme = CvScheme::k_fold);

// Fit the named kind on the full table (used to produce the deployed model
// after compare_models picked a winner).
std::unique_ptr<learn::Regressor> fit_kind(const std::string& kind,
                                           const TrainingTable& table,
                                           std::uint64_t seed,
                                           const ModelHyperparams& hp);

struct MappedValue {
    geo::CellKey cell;
    align::TimeKey time;
    double pm25 = 0.0;
};

// Predict mapped concentrations for tessellation-keyed, mobile-only samples
// meeting the floor; outputs clamped to [0, 500].
std::vector<MappedValue> predict_mapped(const learn::Regressor& model,
                                        const std::vector<align::CellSample>& samples,
                                        const std::vector<ingest::UrbanFeatureLayer>& layers,
                                        const geo::GridSpec& grid,
                                        const TableConfig& cfg);

std::string mapped_csv(const std::vector<MappedValue>& values);

// Features ranked by descending gain (ties by name), as CSV `feature,gain`.
std::string gain_report_csv(const learn::Regressor& model);

}  // namespace pmfuse::fuse
