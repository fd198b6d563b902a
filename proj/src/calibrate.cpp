#include "pmfuse/calibrate.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "pmfuse/errors.hpp"
#include "pmfuse/rng.hpp"
#include "pmfuse/util.hpp"

namespace pmfuse::calibrate {

const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::linear: return "linear";
        case ModelKind::rh_linear: return "rh_linear";
        case ModelKind::rh_t_linear: return "rh_t_linear";
        case ModelKind::boosted: return "boosted";
    }
    throw InternalError("unknown calibration model kind");
}

ModelKind model_kind_from_name(const std::string& name) {
    for (ModelKind k : {ModelKind::linear, ModelKind::rh_linear,
                        ModelKind::rh_t_linear, ModelKind::boosted})
        if (name == model_kind_name(k)) return k;
    throw ValidationError("unknown calibration model kind: " + name);
}

CoLocationSet match_colocation(const std::vector<ingest::MobileRecord>& mobile,
                               const std::vector<ingest::FixedRecord>& fixed,
                               std::int64_t interval_len) {
    if (interval_len <= 0) throw ValidationError("interval_len must be > 0");
    if (mobile.empty() || fixed.empty())
        throw DataError("match_colocation: empty input stream");

    struct Acc {
        double pm = 0, rh = 0, temp = 0;
        std::int64_t n = 0;
    };
    std::map<std::int64_t, Acc> mob;
    for (const auto& r : mobile) {
        std::int64_t start = r.t - ((r.t % interval_len) + interval_len) % interval_len;
        Acc& a = mob[start];
        a.pm += r.pm25_raw;
        a.rh += r.rh;
        a.temp += r.temp;
        ++a.n;
    }
    std::map<std::int64_t, std::pair<double, std::int64_t>> fix;
    for (const auto& r : fixed) {
        std::int64_t start = r.t - ((r.t % interval_len) + interval_len) % interval_len;
        auto& [sum, n] = fix[start];
        sum += r.pm25;
        ++n;
    }

    CoLocationSet out;
    out.interval_len = interval_len;
    for (const auto& [start, acc] : mob) {
        auto it = fix.find(start);
        if (it == fix.end()) continue;
        double nf = static_cast<double>(acc.n);
        out.pairs.push_back(CoLocationPair{
            start, acc.pm / nf, acc.rh / nf, acc.temp / nf,
            it->second.first / static_cast<double>(it->second.second)});
    }
    if (out.pairs.empty())
        throw DataError("match_colocation: no interval has both mobile and fixed data");
    return out;
}

namespace {

learn::Dataset dataset_for(ModelKind kind, const CoLocationSet& set) {
    learn::Dataset d;
    switch (kind) {
        case ModelKind::linear:
            d.n_features = 1;
            d.feature_names = {"pm25_lcs"};
            break;
        case ModelKind::rh_linear:
            d.n_features = 2;
            d.feature_names = {"pm25_lcs", "rh"};
            break;
        case ModelKind::rh_t_linear:
        case ModelKind::boosted:
            d.n_features = 3;
            d.feature_names = {"pm25_lcs", "rh", "temp"};
            break;
    }
    for (const auto& p : set.pairs) {
        double row[3] = {p.pm25_lcs, p.rh, p.temp};
        d.add_row({row, d.n_features}, p.pm25_fixed);
    }
    return d;
}

}  // namespace

CalibrationModel fit(ModelKind kind, const CoLocationSet& train,
                     const learn::GbtConfig& gbt_cfg) {
    if (train.pairs.size() < 10)
        throw DataError("calibration fit needs at least 10 matched pairs");
    learn::Dataset d = dataset_for(kind, train);
    CalibrationModel m;
    m.kind = kind;
    if (kind == ModelKind::boosted) {
        m.boosted = learn::fit_gbt(d, gbt_cfg);
        return m;
    }
    auto reg = learn::fit_ols(d);
    const auto& lin = static_cast<const learn::LinearRegressor&>(*reg);
    m.coef = lin.coefficients();
    m.coef.push_back(lin.intercept());  // (a,b) / (j1,j2,j3) / (k1..k4)
    return m;
}

double CalibrationModel::apply(double pm25_lcs, double rh, double temp) const {
    double v = 0.0;
    switch (kind) {
        case ModelKind::linear:
            v = coef[0] * pm25_lcs + coef[1];
            break;
        case ModelKind::rh_linear:
            v = coef[0] * pm25_lcs + coef[1] * rh + coef[2];
            break;
        case ModelKind::rh_t_linear:
            v = coef[0] * pm25_lcs + coef[1] * rh + coef[2] * temp + coef[3];
            break;
        case ModelKind::boosted: {
            PMFUSE_CHECK(boosted != nullptr, "boosted calibration with no model");
            double row[3] = {pm25_lcs, rh, temp};
            v = boosted->predict({row, 3});
            break;
        }
    }
    return clamp_pm25(v);
}

SplitResult split_pairs(const CoLocationSet& set, double train_fraction,
                        std::uint64_t seed, bool chronological) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ValidationError("train_fraction must be in (0, 1)");
    const std::size_t n = set.pairs.size();
    std::size_t n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(n));
    if (n_train == 0 || n_train == n)
        throw DataError("split leaves an empty train or test set");

    std::vector<std::size_t> order;
    if (chronological) {
        order.resize(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return set.pairs[a].interval_start < set.pairs[b].interval_start;
        });
    } else {
        Rng rng(substream_seed(seed, "calibration_split"));
        order = rng.shuffled_indices(n);
    }

    SplitResult out;
    out.train.interval_len = out.test.interval_len = set.interval_len;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = set.pairs[order[i]];
        (i < n_train ? out.train : out.test).pairs.push_back(p);
    }
    return out;
}

CalibrationReport evaluate(const std::vector<CalibrationModel>& models,
                           const CoLocationSet& test) {
    if (test.pairs.empty()) throw DataError("evaluate: empty test set");
    CalibrationReport rep;
    for (const auto& m : models) {
        metrics::PairedSeries s;
        s.y.reserve(test.pairs.size());
        s.y_hat.reserve(test.pairs.size());
        for (const auto& p : test.pairs) {
            s.y.push_back(p.pm25_fixed);
            s.y_hat.push_back(m.apply(p.pm25_lcs, p.rh, p.temp));
        }
        rep.rows.emplace_back(m.kind,
                              metrics::compute_report(s, model_kind_name(m.kind)));
    }
    // Table row order (a)..(d).
    std::sort(rep.rows.begin(), rep.rows.end(), [](const auto& a, const auto& b) {
        return static_cast<int>(a.first) < static_cast<int>(b.first);
    });
    return rep;
}

std::string CalibrationReport::csv() const {
    std::ostringstream ss;
    ss << metrics::MetricReport::csv_header() << '\n';
    for (const auto& [kind, row] : rows) ss << row.csv_row() << '\n';
    return ss.str();
}

std::vector<std::vector<double>> cross_device_correlation(
    const std::vector<std::vector<double>>& series) {
    if (series.size() < 2)
        throw ValidationError("cross_device_correlation needs >= 2 series");
    const std::size_t len = series.front().size();
    for (const auto& s : series)
        if (s.size() != len)
            throw ValidationError("cross_device_correlation: length mismatch");

    const std::size_t k = series.size();
    std::vector<std::vector<double>> m(k, std::vector<double>(k, 1.0));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            metrics::PairedSeries s;
            s.y = series[i];
            s.y_hat = series[j];
            double r = metrics::pearson_r(s);
            m[i][j] = m[j][i] = r;
        }
    }
    return m;
}

void save_calibration(const CalibrationModel& m, const std::string& path) {
    std::ostringstream ss;
    ss << "pmfuse-calibration v1\n";
    ss << "kind " << model_kind_name(m.kind) << "\n";
    if (m.kind == ModelKind::boosted) {
        PMFUSE_CHECK(m.boosted != nullptr, "boosted calibration with no model");
        m.boosted->serialize(ss);
    } else {
        ss << "coef";
        for (double c : m.coef) ss << ' ' << format_double(c);
        ss << "\n";
    }
    write_text_file(path, ss.str());
}

CalibrationModel load_calibration(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open calibration file: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "pmfuse-calibration v1")
        throw DataError(path + ": bad calibration file magic");
    if (!std::getline(in, line) || line.rfind("kind ", 0) != 0)
        throw DataError(path + ": missing calibration kind");
    CalibrationModel m;
    m.kind = model_kind_from_name(line.substr(5));
    if (m.kind == ModelKind::boosted) {
        m.boosted = learn::parse_model(in);
        return m;
    }
    if (!std::getline(in, line) || line.rfind("coef", 0) != 0)
        throw DataError(path + ": missing coef line");
    std::istringstream ss(line.substr(4));
    std::string tok;
    while (ss >> tok) {
        auto v = parse_double(tok);
        if (!v) throw DataError(path + ": bad coefficient " + tok);
        m.coef.push_back(*v);
    }
    std::size_t expected = m.kind == ModelKind::linear ? 2
                           : m.kind == ModelKind::rh_linear ? 3 : 4;
    if (m.coef.size() != expected)
        throw DataError(path + ": wrong coefficient count for kind");
    return m;
}

}  // namespace pmfuse::calibrate
