#include "pmfuse/fuse.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "pmfuse/errors.hpp"
#include "pmfuse/metrics.hpp"
#include "pmfuse/rng.hpp"
#include "pmfuse/util.hpp"

namespace pmfuse::fuse {

namespace {

std::vector<std::string> feature_names_for(
    const std::vector<ingest::UrbanFeatureLayer>& layers) {
    std::vector<std::string> names = {kMeanMobileFeature, "min_mobile", "max_mobile",
                                      "n_mobile"};
    for (const auto& l : layers) names.push_back(l.name);
    return names;
}

std::vector<double> features_at(const align::CellSample& s,
                                const std::vector<ingest::UrbanFeatureLayer>& layers,
                                std::int64_t cell_index) {
    std::vector<double> f = {s.stats.mean, s.stats.min, s.stats.max,
                             static_cast<double>(s.stats.n)};
    for (const auto& l : layers) f.push_back(l.values[cell_index]);
    return f;
}

}  // namespace

learn::Dataset TrainingTable::dataset() const {
    learn::Dataset d;
    d.n_features = feature_names.size();
    d.feature_names = feature_names;
    for (const auto& row : rows) d.add_row(row.features, row.target);
    return d;
}

TrainingTable build_table(const std::vector<align::CellSample>& samples,
                          const std::vector<ingest::UrbanFeatureLayer>& layers,
                          const std::vector<align::ProjectedStation>& stations,
                          const geo::GridSpec& grid, const TableConfig& cfg) {
    grid.validate();
    for (const auto& l : layers)
        if (l.values.size() != static_cast<std::size_t>(grid.n_cells()))
            throw ValidationError("layer '" + l.name + "' not rasterized on this grid");

    std::map<std::string, std::optional<std::int64_t>> station_cell;
    for (const auto& st : stations) {
        auto key = geo::cell_of(st.pos, grid);
        station_cell[st.station_id] =
            key ? std::optional<std::int64_t>(grid.index_of(*key)) : std::nullopt;
    }

    TrainingTable table;
    table.feature_names = feature_names_for(layers);
    std::set<std::string> outside;
    for (const auto& s : samples) {
        if (s.station_id.empty())
            throw ValidationError("build_table expects station-keyed samples");
        if (!s.fixed_value) continue;
        if (s.stats.n < static_cast<std::int64_t>(cfg.n_mobile_floor)) continue;
        auto it = station_cell.find(s.station_id);
        if (it == station_cell.end())
            throw ValidationError("sample references unknown station " + s.station_id);
        if (!it->second) {
            outside.insert(s.station_id);
            continue;
        }
        FeatureRow row;
        row.station_id = s.station_id;
        row.time = s.time;
        row.features = features_at(s, layers, *it->second);
        row.target = *s.fixed_value;
        table.rows.push_back(std::move(row));
    }
    table.stations_outside_grid = outside.size();
    if (table.rows.empty())
        throw DataError("build_table: no eligible training rows");
    // Canonical order regardless of sample order.
    std::sort(table.rows.begin(), table.rows.end(),
              [](const FeatureRow& a, const FeatureRow& b) {
                  if (a.station_id != b.station_id) return a.station_id < b.station_id;
                  return a.time.interval_start < b.time.interval_start;
              });
    return table;
}

std::unique_ptr<learn::Regressor> fit_kind(const std::string& kind,
                                           const TrainingTable& table,
                                           std::uint64_t seed,
                                           const ModelHyperparams& hp) {
    learn::Dataset d = table.dataset();
    learn::RegressorKind k = learn::kind_from_name(kind);
    switch (k) {
        case learn::RegressorKind::gbt:
            return learn::fit_gbt(d, hp.gbt);
        case learn::RegressorKind::forest: {
            learn::ForestConfig fc = hp.forest;
            fc.seed = substream_seed(seed, "forest");
            return learn::fit_forest(d, fc);
        }
        case learn::RegressorKind::ols:
            return learn::fit_ols(d);
        case learn::RegressorKind::lasso: {
            double lambda = hp.lasso_lambda
                                ? *hp.lasso_lambda
                                : learn::choose_lasso_lambda_cv(
                                      d, substream_seed(seed, "lasso_lambda"));
            return learn::fit_lasso(d, lambda);
        }
        case learn::RegressorKind::knn:
            return learn::fit_knn(d, hp.knn_k);
        case learn::RegressorKind::average:
            return learn::fit_average(d, kMeanMobileFeature);
        case learn::RegressorKind::tree:
            return learn::fit_tree(d, learn::TreeConfig{});
    }
    throw InternalError("unreachable regressor kind");
}

ModelComparison compare_models(const TrainingTable& table, std::uint64_t seed,
                               const ModelHyperparams& hp, int folds,
                               CvScheme scheme) {
    if (table.rows.size() < 50)
        throw DataError("compare_models needs at least 50 rows, got " +
                        std::to_string(table.rows.size()));
    if (folds < 2) throw ValidationError("compare_models needs >= 2 folds");

    ModelComparison cmp;
    cmp.scheme = scheme;
    cmp.seed = seed;

    const std::size_t n = table.rows.size();
    cmp.fold_of_row.resize(n);
    if (scheme == CvScheme::leave_one_station_out) {
        std::map<std::string, std::size_t> station_fold;
        for (const auto& row : table.rows)
            station_fold.emplace(row.station_id, station_fold.size());
        for (std::size_t i = 0; i < n; ++i)
            cmp.fold_of_row[i] = station_fold[table.rows[i].station_id];
        cmp.folds = static_cast<int>(station_fold.size());
        if (cmp.folds < 2)
            throw DataError("leave-one-station-out needs >= 2 stations");
    } else {
        cmp.folds = folds;
        std::uint64_t fold_seed = substream_seed(seed, "cv_folds");
        for (std::size_t i = 0; i < n; ++i) {
            // Hash row identity, not row index: fold assignment survives
            // input permutations.
            std::uint64_t h = fnv1a64(table.rows[i].station_id, fold_seed);
            std::int64_t t = table.rows[i].time.interval_start;
            h = fnv1a64(&t, sizeof(t), h);
            cmp.fold_of_row[i] = static_cast<std::size_t>(h % folds);
        }
    }

    const char* kinds[] = {"gbt", "forest", "ols", "lasso", "knn", "average"};
    for (const char* kind : kinds) {
        ModelScore score;
        score.model = kind;
        std::vector<double> y(n), yhat(n);
        std::vector<bool> predicted(n, false);
        try {
            for (int f = 0; f < cmp.folds; ++f) {
                TrainingTable train;
                train.feature_names = table.feature_names;
                std::vector<std::size_t> test_rows;
                for (std::size_t i = 0; i < n; ++i) {
                    if (cmp.fold_of_row[i] == static_cast<std::size_t>(f))
                        test_rows.push_back(i);
                    else
                        train.rows.push_back(table.rows[i]);
                }
                if (test_rows.empty()) continue;
                if (train.rows.empty())
                    throw DataError("cross-validation fold left no training rows");
                auto model = fit_kind(kind, train, seed, hp);
                for (std::size_t i : test_rows) {
                    y[i] = table.rows[i].target;
                    yhat[i] = model->predict(table.rows[i].features);
                    predicted[i] = true;
                }
            }
            metrics::PairedSeries pooled;
            for (std::size_t i = 0; i < n; ++i) {
                if (!predicted[i]) continue;
                pooled.y.push_back(y[i]);
                pooled.y_hat.push_back(yhat[i]);
            }
            score.mae = metrics::mae(pooled);
            score.mape = metrics::mape(pooled).value;
            score.r = metrics::pearson_r(pooled);
        } catch (const std::exception& e) {
            score.failed = true;
            score.failure = e.what();
        }
        cmp.scores.push_back(std::move(score));
    }

    double best_mae = 0.0;
    for (const auto& s : cmp.scores) {
        if (s.failed) continue;
        if (cmp.best.empty() || s.mae < best_mae) {
            cmp.best = s.model;
            best_mae = s.mae;
        }
    }
    if (cmp.best.empty())
        throw DataError("compare_models: every model kind failed");
    return cmp;
}

std::string ModelComparison::csv() const {
    std::ostringstream ss;
    ss << "model,mae,mape,r\n";
    char buf[128];
    for (const auto& s : scores) {
        if (s.failed) {
            ss << s.model << ",nan,nan,nan\n";
        } else {
            std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f", s.model.c_str(),
                          s.mae, s.mape, s.r);
            ss << buf << '\n';
        }
    }
    return ss.str();
}

std::vector<MappedValue> predict_mapped(const learn::Regressor& model,
                                        const std::vector<align::CellSample>& samples,
                                        const std::vector<ingest::UrbanFeatureLayer>& layers,
                                        const geo::GridSpec& grid,
                                        const TableConfig& cfg) {
    grid.validate();
    std::vector<MappedValue> out;
    for (const auto& s : samples) {
        if (!s.cell)
            throw ValidationError("predict_mapped expects tessellation-keyed samples");
        if (s.stats.n < static_cast<std::int64_t>(cfg.n_mobile_floor)) continue;
        std::vector<double> f = features_at(s, layers, grid.index_of(*s.cell));
        double v = clamp_pm25(model.predict(f));
        out.push_back(MappedValue{*s.cell, s.time, v});
    }
    return out;
}

std::string mapped_csv(const std::vector<MappedValue>& values) {
    std::ostringstream ss;
    ss << "col,row,interval_start,pm25,source\n";
    char buf[128];
    for (const auto& v : values) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%lld,%.6f,mapped", v.cell.col,
                      v.cell.row, static_cast<long long>(v.time.interval_start),
                      v.pm25);
        ss << buf << '\n';
    }
    return ss.str();
}

std::string gain_report_csv(const learn::Regressor& model) {
    learn::GainTable table = learn::gain_table(model);
    std::ostringstream ss;
    ss << "feature,gain\n";
    for (const auto& e : table.ranked())
        ss << e.feature << ',' << format_double(e.gain) << '\n';
    return ss.str();
}

}  // namespace pmfuse::fuse
