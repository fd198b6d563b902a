#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pmfuse::metrics {

// Reference series y paired with predicted/compared series y_hat.
struct PairedSeries {
    std::vector<double> y;
    std::vector<double> y_hat;

    void validate() const;  // equal length >= 2, finite values
};

double pearson_r(const PairedSeries& s);
double r_squared(const PairedSeries& s);
double mae(const PairedSeries& s);
double rmse(const PairedSeries& s);

struct MapeResult {
    double value = 0.0;        // fraction, not percent
    std::size_t excluded = 0;  // pairs with y == 0, left out of the mean
};
MapeResult mape(const PairedSeries& s);

struct MetricReport {
    std::string context;
    std::size_t n = 0;
    double r = 0.0;
    double r2 = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;          // fraction
    std::size_t mape_excluded = 0;

    std::string csv_row() const;  // context,n,r,r2,mae,rmse,mape
    static std::string csv_header();
};

MetricReport compute_report(const PairedSeries& s, const std::string& context);

// One time slice of gridded values with a presence mask. This is the
// minimal field view shared by the spatial statistics; the maps module
// adapts its PollutionMap onto it.
struct CellField {
    std::int32_t n_cols = 0;
    std::int32_t n_rows = 0;
    std::vector<double> values;         // n_cols * n_rows, row-major
    std::vector<std::uint8_t> present;  // same size, 1 = value valid

    std::size_t index(std::int32_t col, std::int32_t row) const {
        return static_cast<std::size_t>(row) * n_cols + col;
    }
};

struct AdjacentVariation {
    double mean_pct = 0.0;  // mean over steps of per-step mean |dC|/C * 100
    double std_pct = 0.0;   // population std over steps
    std::size_t steps_used = 0;
    std::size_t steps_skipped = 0;  // steps with no valid cell pair
};

// Per adjacent slice pair t -> t+1: mean over cells present in both with
// C_t > 0 of |C_{t+1} - C_t| / C_t * 100. Mean and population std over steps.
AdjacentVariation adjacent_variation(const std::vector<CellField>& slices);

// Global Moran's I with rook contiguity restricted to present cells,
// row-standardized weights. Requires >= 9 present cells and nonzero variance.
double morans_i(const CellField& field);

}  // namespace pmfuse::metrics
