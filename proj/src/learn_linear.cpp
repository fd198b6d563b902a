#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pmfuse/errors.hpp"
#include "pmfuse/learn.hpp"
#include "pmfuse/rng.hpp"
#include "pmfuse/util.hpp"

namespace pmfuse::learn {

namespace {

// Householder QR least squares on an n x m column-major matrix. Returns the
// coefficient vector; throws SingularFitError on rank deficiency.
std::vector<double> qr_solve(std::vector<double> a, std::size_t n, std::size_t m,
                             std::vector<double> b) {
    if (n < m) throw SingularFitError("least squares: fewer rows than columns");
    auto at = [&](std::size_t i, std::size_t j) -> double& { return a[j * n + i]; };

    double max_diag = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        double norm = 0.0;
        for (std::size_t i = k; i < n; ++i) norm += at(i, k) * at(i, k);
        norm = std::sqrt(norm);
        if (norm == 0.0) throw SingularFitError("design matrix is rank deficient");
        double alpha = at(k, k) > 0 ? -norm : norm;
        double vk = at(k, k) - alpha;
        // v = [vk, a(k+1..n-1,k)]; beta = 2 / (v'v)
        double vtv = vk * vk;
        for (std::size_t i = k + 1; i < n; ++i) vtv += at(i, k) * at(i, k);
        if (vtv == 0.0) throw SingularFitError("design matrix is rank deficient");
        double beta = 2.0 / vtv;
        // Apply H = I - beta v v' to remaining columns and to b.
        for (std::size_t j = k; j < m; ++j) {
            double dot = vk * at(k, j);
            for (std::size_t i = k + 1; i < n; ++i) dot += at(i, k) * at(i, j);
            dot *= beta;
            at(k, j) -= dot * vk;
            if (j > k)
                for (std::size_t i = k + 1; i < n; ++i) at(i, j) -= dot * at(i, k);
        }
        double dot = vk * b[k];
        for (std::size_t i = k + 1; i < n; ++i) dot += at(i, k) * b[i];
        dot *= beta;
        b[k] -= dot * vk;
        for (std::size_t i = k + 1; i < n; ++i) b[i] -= dot * at(i, k);
        max_diag = std::max(max_diag, std::abs(at(k, k)));
    }
    for (std::size_t k = 0; k < m; ++k)
        if (std::abs(at(k, k)) < 1e-12 * std::max(max_diag, 1.0))
            throw SingularFitError("design matrix is rank deficient");

    std::vector<double> coef(m, 0.0);
    for (std::size_t k = m; k-- > 0;) {
        double v = b[k];
        for (std::size_t j = k + 1; j < m; ++j) v -= at(k, j) * coef[j];
        coef[k] = v / at(k, k);
    }
    return coef;
}

struct Standardized {
    std::vector<double> means, stds;  // per feature; std = 0 marks constant column
    std::vector<double> scaled;       // row-major
};

Standardized standardize(const Dataset& d) {
    const std::size_t n = d.n_samples(), p = d.n_features;
    Standardized s;
    s.means.assign(p, 0.0);
    s.stds.assign(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        KahanSum sum;
        for (std::size_t i = 0; i < n; ++i) sum.add(d.x[i * p + j]);
        s.means[j] = sum.value() / static_cast<double>(n);
        KahanSum var;
        for (std::size_t i = 0; i < n; ++i) {
            double z = d.x[i * p + j] - s.means[j];
            var.add(z * z);
        }
        double v = var.value() / static_cast<double>(n);  // population variance
        s.stds[j] = v > 0.0 ? std::sqrt(v) : 0.0;
    }
    s.scaled.resize(n * p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j)
            s.scaled[i * p + j] =
                s.stds[j] > 0.0 ? (d.x[i * p + j] - s.means[j]) / s.stds[j] : 0.0;
    return s;
}

double soft_threshold(double z, double lambda) {
    if (z > lambda) return z - lambda;
    if (z < -lambda) return z + lambda;
    return 0.0;
}

}  // namespace

LinearRegressor::LinearRegressor(RegressorKind kind, std::vector<double> coef,
                                 double intercept, std::vector<std::string> names)
    : kind_(kind), coef_(std::move(coef)), intercept_(intercept),
      names_(std::move(names)) {}

double LinearRegressor::predict(std::span<const double> row) const {
    double v = intercept_;
    for (std::size_t j = 0; j < coef_.size(); ++j) v += coef_[j] * row[j];
    return v;
}

KnnRegressor::KnnRegressor(int k, std::vector<double> means, std::vector<double> stds,
                           std::vector<double> scaled_x, std::vector<double> targets,
                           std::vector<std::string> names)
    : k_(k), means_(std::move(means)), stds_(std::move(stds)),
      scaled_x_(std::move(scaled_x)), targets_(std::move(targets)),
      names_(std::move(names)) {}

double KnnRegressor::predict(std::span<const double> row) const {
    const std::size_t n = targets_.size();
    const std::size_t p = means_.size();
    std::vector<double> q(p);
    for (std::size_t j = 0; j < p; ++j)
        q[j] = stds_[j] > 0.0 ? (row[j] - means_[j]) / stds_[j] : 0.0;

    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            double diff = scaled_x_[i * p + j] - q[j];
            d2 += diff * diff;
        }
        dist[i] = {d2, i};  // ties resolve to the lowest row index
    }
    std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_), n);
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    KahanSum s;
    for (std::size_t i = 0; i < k; ++i) s.add(targets_[dist[i].second]);
    return s.value() / static_cast<double>(k);
}

AverageRegressor::AverageRegressor(std::size_t feature_index,
                                   std::vector<std::string> names)
    : feature_index_(feature_index), names_(std::move(names)) {}

double AverageRegressor::predict(std::span<const double> row) const {
    return row[feature_index_];
}

std::unique_ptr<Regressor> fit_ols(const Dataset& d) {
    d.validate();
    const std::size_t n = d.n_samples(), p = d.n_features;
    // Column-major [X | 1].
    std::vector<double> a((p + 1) * n);
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t i = 0; i < n; ++i) a[j * n + i] = d.x[i * p + j];
    for (std::size_t i = 0; i < n; ++i) a[p * n + i] = 1.0;
    std::vector<double> coef = qr_solve(std::move(a), n, p + 1, d.y);
    double intercept = coef.back();
    coef.pop_back();
    return std::make_unique<LinearRegressor>(RegressorKind::ols, std::move(coef),
                                             intercept, d.feature_names);
}

std::unique_ptr<Regressor> fit_lasso(const Dataset& d, double lambda) {
    d.validate();
    if (lambda < 0.0) throw ValidationError("lasso lambda must be >= 0");
    const std::size_t n = d.n_samples(), p = d.n_features;
    Standardized s = standardize(d);

    KahanSum ysum;
    for (double v : d.y) ysum.add(v);
    const double ymean = ysum.value() / static_cast<double>(n);

    std::vector<double> beta(p, 0.0);
    std::vector<double> resid(n);
    for (std::size_t i = 0; i < n; ++i) resid[i] = d.y[i] - ymean;

    constexpr int kMaxSweeps = 10000;
    constexpr double kTol = 1e-6;
    int sweep = 0;
    for (; sweep < kMaxSweeps; ++sweep) {
        double max_delta = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            if (s.stds[j] == 0.0) continue;  // constant column stays at 0
            double rho = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                rho += s.scaled[i * p + j] * resid[i];
            rho = rho / static_cast<double>(n) + beta[j];  // x_j'x_j/n == 1
            double next = soft_threshold(rho, lambda);
            double delta = next - beta[j];
            if (delta != 0.0) {
                for (std::size_t i = 0; i < n; ++i)
                    resid[i] -= delta * s.scaled[i * p + j];
                beta[j] = next;
            }
            max_delta = std::max(max_delta, std::abs(delta));
        }
        if (max_delta < kTol) break;
    }
    if (sweep == kMaxSweeps)
        throw ConvergenceError("lasso did not converge in " +
                               std::to_string(kMaxSweeps) + " sweeps");

    std::vector<double> coef(p, 0.0);
    double intercept = ymean;
    for (std::size_t j = 0; j < p; ++j) {
        if (s.stds[j] == 0.0) continue;
        coef[j] = beta[j] / s.stds[j];
        intercept -= coef[j] * s.means[j];
    }
    return std::make_unique<LinearRegressor>(RegressorKind::lasso, std::move(coef),
                                             intercept, d.feature_names);
}

double choose_lasso_lambda_cv(const Dataset& d, std::uint64_t seed) {
    d.validate();
    const std::size_t n = d.n_samples(), p = d.n_features;
    if (n < 10) throw ValidationError("lasso lambda CV needs >= 10 samples");

    // lambda_max: smallest lambda with all-zero slopes on the full data.
    Standardized s = standardize(d);
    KahanSum ysum;
    for (double v : d.y) ysum.add(v);
    double ymean = ysum.value() / static_cast<double>(n);
    double lambda_max = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        if (s.stds[j] == 0.0) continue;
        double rho = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            rho += s.scaled[i * p + j] * (d.y[i] - ymean);
        lambda_max = std::max(lambda_max, std::abs(rho) / static_cast<double>(n));
    }
    if (lambda_max <= 0.0) return 0.0;  // constant target

    constexpr int kGridPoints = 20;
    constexpr int kFolds = 5;
    // Fold by row content so assignment does not depend on row order.
    std::vector<std::size_t> fold(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
        h = fnv1a64(&d.x[i * p], p * sizeof(double), h);
        h = fnv1a64(&d.y[i], sizeof(double), h);
        fold[i] = static_cast<std::size_t>(h % kFolds);
    }

    double best_lambda = lambda_max;
    double best_mse = std::numeric_limits<double>::infinity();
    for (int g = 0; g < kGridPoints; ++g) {
        // Log-spaced from lambda_max down to lambda_max * 1e-4.
        double lambda = lambda_max * std::pow(10.0, -4.0 * g / (kGridPoints - 1));
        KahanSum err;
        std::size_t count = 0;
        bool failed = false;
        for (int f = 0; f < kFolds && !failed; ++f) {
            Dataset train, test;
            train.n_features = test.n_features = p;
            train.feature_names = test.feature_names = d.feature_names;
            for (std::size_t i = 0; i < n; ++i) {
                if (fold[i] == static_cast<std::size_t>(f))
                    test.add_row(d.row(i), d.y[i]);
                else
                    train.add_row(d.row(i), d.y[i]);
            }
            if (train.n_samples() < 2 || test.n_samples() == 0) continue;
            try {
                auto model = fit_lasso(train, lambda);
                for (std::size_t i = 0; i < test.n_samples(); ++i) {
                    double e = model->predict(test.row(i)) - test.y[i];
                    err.add(e * e);
                    ++count;
                }
            } catch (const ConvergenceError&) {
                failed = true;
            }
        }
        if (failed || count == 0) continue;
        double mse = err.value() / static_cast<double>(count);
        if (mse < best_mse) {
            best_mse = mse;
            best_lambda = lambda;
        }
    }
    return best_lambda;
}

std::unique_ptr<Regressor> fit_knn(const Dataset& d, int k) {
    d.validate();
    if (k < 1) throw ValidationError("knn needs k >= 1");
    Standardized s = standardize(d);
    return std::make_unique<KnnRegressor>(k, std::move(s.means), std::move(s.stds),
                                          std::move(s.scaled), d.y, d.feature_names);
}

std::unique_ptr<Regressor> fit_average(const Dataset& d,
                                       const std::string& passthrough_feature) {
    d.validate();
    auto it = std::find(d.feature_names.begin(), d.feature_names.end(),
                        passthrough_feature);
    if (it == d.feature_names.end())
        throw ValidationError("average baseline: no feature named '" +
                              passthrough_feature + "'");
    std::size_t idx = static_cast<std::size_t>(it - d.feature_names.begin());
    return std::make_unique<AverageRegressor>(idx, d.feature_names);
}

}  // namespace pmfuse::learn
