#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pmfuse::learn {

struct Dataset {
    std::size_t n_features = 0;
    std::vector<double> x;  // row-major, n_samples() * n_features
    std::vector<double> y;
    std::vector<std::string> feature_names;

    std::size_t n_samples() const { return y.size(); }
    std::span<const double> row(std::size_t i) const {
        return {x.data() + i * n_features, n_features};
    }
    void add_row(std::span<const double> features, double target);
    void validate() const;
};

enum class RegressorKind { ols, lasso, knn, tree, forest, gbt, average };

const char* kind_name(RegressorKind k);
RegressorKind kind_from_name(const std::string& name);

// Per-feature total gain: for tree-based kinds, the summed squared-error
// reduction over every split on that feature (accumulated before shrinkage).
struct GainTable {
    std::vector<std::string> feature_names;
    std::vector<double> gains;  // parallel to feature_names

    struct Entry {
        std::string feature;
        double gain;
    };
    // Descending by gain, ties by feature name.
    std::vector<Entry> ranked() const;
};

class Regressor {
public:
    virtual ~Regressor() = default;
    virtual RegressorKind kind() const = 0;
    virtual double predict(std::span<const double> row) const = 0;
    virtual void serialize(std::ostream& out) const = 0;
    virtual const std::vector<std::string>& feature_names() const = 0;

    std::vector<double> predict_all(const Dataset& d) const;
};

// ---- trees ----------------------------------------------------------------

struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;     // x[feature] <= threshold goes left
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;  // leaf value (mean target)
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root; empty = zero leaf
    double predict(std::span<const double> row) const;
};

struct TreeConfig {
    int max_depth = 6;
    int min_leaf = 1;
};

struct ForestConfig {
    int n_trees = 200;
    int max_depth = 8;
    int min_leaf = 1;
    bool bootstrap = true;
    bool sqrt_features = true;  // random sqrt(p) features per split
    std::uint64_t seed = 0;
};

struct GbtConfig {
    int n_trees = 300;
    int max_depth = 4;
    int min_leaf = 1;
    double learning_rate = 0.1;
};

class TreeRegressor : public Regressor {
public:
    TreeRegressor(Tree tree, std::vector<std::string> names, std::vector<double> gains);
    RegressorKind kind() const override { return RegressorKind::tree; }
    double predict(std::span<const double> row) const override;
    void serialize(std::ostream& out) const override;
    const std::vector<std::string>& feature_names() const override { return names_; }
    const Tree& tree() const { return tree_; }
    const std::vector<double>& gains() const { return gains_; }

private:
    Tree tree_;
    std::vector<std::string> names_;
    std::vector<double> gains_;
};

class ForestRegressor : public Regressor {
public:
    ForestRegressor(std::vector<Tree> trees, std::vector<std::string> names,
                    std::vector<double> gains);
    RegressorKind kind() const override { return RegressorKind::forest; }
    double predict(std::span<const double> row) const override;
    void serialize(std::ostream& out) const override;
    const std::vector<std::string>& feature_names() const override { return names_; }
    const std::vector<Tree>& trees() const { return trees_; }
    const std::vector<double>& gains() const { return gains_; }

private:
    std::vector<Tree> trees_;
    std::vector<std::string> names_;
    std::vector<double> gains_;
};

class GbtRegressor : public Regressor {
public:
    GbtRegressor(double base, double learning_rate, std::vector<Tree> trees,
                 std::vector<std::string> names, std::vector<double> gains,
                 std::vector<double> stage_losses);
    RegressorKind kind() const override { return RegressorKind::gbt; }
    double predict(std::span<const double> row) const override;
    void serialize(std::ostream& out) const override;
    const std::vector<std::string>& feature_names() const override { return names_; }
    const std::vector<Tree>& trees() const { return trees_; }
    const std::vector<double>& gains() const { return gains_; }
    double base() const { return base_; }
    double learning_rate() const { return learning_rate_; }
    // Training MSE after each boosting stage (index 0 = after the base).
    const std::vector<double>& stage_losses() const { return stage_losses_; }

private:
    double base_;
    double learning_rate_;
    std::vector<Tree> trees_;
    std::vector<std::string> names_;
    std::vector<double> gains_;
    std::vector<double> stage_losses_;
};

// ---- linear & friends -------------------------------------------------------

class LinearRegressor : public Regressor {
public:
    LinearRegressor(RegressorKind kind, std::vector<double> coef, double intercept,
                    std::vector<std::string> names);
    RegressorKind kind() const override { return kind_; }
    double predict(std::span<const double> row) const override;
    void serialize(std::ostream& out) const override;
    const std::vector<std::string>& feature_names() const override { return names_; }
    const std::vector<double>& coefficients() const { return coef_; }
    double intercept() const { return intercept_; }

private:
    RegressorKind kind_;
    std::vector<double> coef_;
    double intercept_;
    std::vector<std::string> names_;
};

class KnnRegressor : public Regressor {
public:
    KnnRegressor(int k, std::vector<double> means, std::vector<double> stds,
                 std::vector<double> scaled_x, std::vector<double> targets,
                 std::vector<std::string> names);
    RegressorKind kind() const override { return RegressorKind::knn; }
    double predict(std::span<const double> row) const override;
    void serialize(std::ostream& out) const override;
    const std::vector<std::string>& feature_names() const override { return names_; }
    int k() const { return k_; }

private:
    int k_;
    std::vector<double> means_, stds_;
    std::vector<double> scaled_x_;  // row-major
    std::vector<double> targets_;
    std::vector<std::string> names_;
};

class AverageRegressor : public Regressor {
public:
    AverageRegressor(std::size_t feature_index, std::vector<std::string> names);
    RegressorKind kind() const override { return RegressorKind::average; }
    double predict(std::span<const double> row) const override;
    void serialize(std::ostream& out) const override;
    const std::vector<std::string>& feature_names() const override { return names_; }

private:
    std::size_t feature_index_;
    std::vector<std::string> names_;
};

// ---- fitting ----------------------------------------------------------------

std::unique_ptr<Regressor> fit_ols(const Dataset& d);
// Coordinate descent on internally standardized features; objective
// (1/2n)*||y - Xb||^2 + lambda*sum|b_j|, intercept unpenalized.
std::unique_ptr<Regressor> fit_lasso(const Dataset& d, double lambda);
double choose_lasso_lambda_cv(const Dataset& d, std::uint64_t seed);
std::unique_ptr<Regressor> fit_knn(const Dataset& d, int k);
std::unique_ptr<Regressor> fit_tree(const Dataset& d, const TreeConfig& cfg);
std::unique_ptr<Regressor> fit_forest(const Dataset& d, const ForestConfig& cfg);
std::unique_ptr<Regressor> fit_gbt(const Dataset& d, const GbtConfig& cfg);
std::unique_ptr<Regressor> fit_average(const Dataset& d,
                                       const std::string& passthrough_feature);

GainTable gain_table(const Regressor& r);

// ---- model files --------------------------------------------------------------

void save_model(const Regressor& r, const std::string& path);
std::unique_ptr<Regressor> load_model(const std::string& path);
std::unique_ptr<Regressor> parse_model(std::istream& in);

}  // namespace pmfuse::learn
