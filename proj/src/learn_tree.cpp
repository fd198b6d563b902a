#include <algorithm>
#include <cmath>
#include <utility>

#include "pmfuse/errors.hpp"
#include "pmfuse/learn.hpp"
#include "pmfuse/rng.hpp"
#include "pmfuse/util.hpp"

namespace pmfuse::learn {

void Dataset::add_row(std::span<const double> features, double target) {
    if (n_features == 0 && x.empty()) n_features = features.size();
    if (features.size() != n_features)
        throw ValidationError("dataset row width mismatch");
    x.insert(x.end(), features.begin(), features.end());
    y.push_back(target);
}

void Dataset::validate() const {
    if (n_samples() == 0) throw ValidationError("dataset is empty");
    if (x.size() != n_samples() * n_features)
        throw ValidationError("dataset matrix size mismatch");
    if (feature_names.size() != n_features)
        throw ValidationError("dataset feature_names size mismatch");
    for (std::size_t i = 0; i < feature_names.size(); ++i)
        for (std::size_t j = i + 1; j < feature_names.size(); ++j)
            if (feature_names[i] == feature_names[j])
                throw ValidationError("duplicate feature name: " + feature_names[i]);
    for (double v : x)
        if (!std::isfinite(v)) throw ValidationError("non-finite feature value");
    for (double v : y)
        if (!std::isfinite(v)) throw ValidationError("non-finite target value");
}

const char* kind_name(RegressorKind k) {
    switch (k) {
        case RegressorKind::ols: return "ols";
        case RegressorKind::lasso: return "lasso";
        case RegressorKind::knn: return "knn";
        case RegressorKind::tree: return "tree";
        case RegressorKind::forest: return "forest";
        case RegressorKind::gbt: return "gbt";
        case RegressorKind::average: return "average";
    }
    throw InternalError("unknown regressor kind");
}

RegressorKind kind_from_name(const std::string& name) {
    for (RegressorKind k :
         {RegressorKind::ols, RegressorKind::lasso, RegressorKind::knn,
          RegressorKind::tree, RegressorKind::forest, RegressorKind::gbt,
          RegressorKind::average})
        if (name == kind_name(k)) return k;
    throw ValidationError("unknown regressor kind: " + name);
}

std::vector<double> Regressor::predict_all(const Dataset& d) const {
    std::vector<double> out;
    out.reserve(d.n_samples());
    for (std::size_t i = 0; i < d.n_samples(); ++i) out.push_back(predict(d.row(i)));
    return out;
}

std::vector<GainTable::Entry> GainTable::ranked() const {
    std::vector<Entry> out;
    out.reserve(feature_names.size());
    for (std::size_t i = 0; i < feature_names.size(); ++i)
        out.push_back(Entry{feature_names[i], gains[i]});
    std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) {
        if (a.gain != b.gain) return a.gain > b.gain;
        return a.feature < b.feature;
    });
    return out;
}

double Tree::predict(std::span<const double> row) const {
    if (nodes.empty()) return 0.0;
    std::int32_t i = 0;
    while (nodes[i].feature >= 0)
        i = row[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold
                ? nodes[i].left
                : nodes[i].right;
    return nodes[i].value;
}

namespace {

// Recursive greedy variance-reduction builder. `targets` may be the
// dataset's y or, for boosting, the current residuals.
class TreeBuilder {
public:
    TreeBuilder(const Dataset& d, const std::vector<double>& targets,
                int max_depth, int min_leaf, std::vector<double>& gains,
                Rng* rng, std::size_t subset_k)
        : d_(d),
          targets_(targets),
          max_depth_(max_depth),
          min_leaf_(min_leaf < 1 ? 1 : min_leaf),
          gains_(gains),
          rng_(rng),
          subset_k_(subset_k) {}

    Tree build(std::vector<std::size_t> indices) {
        Tree tree;
        if (indices.empty()) {
            tree.nodes.push_back(TreeNode{});  // zero-value leaf
            return tree;
        }
        grow(tree, std::move(indices), 0);
        return tree;
    }

private:
    struct Best {
        double gain = 0.0;
        std::size_t feature = 0;
        double threshold = 0.0;
        bool found = false;
    };

    std::int32_t grow(Tree& tree, std::vector<std::size_t> idx, int depth) {
        const std::size_t n = idx.size();
        KahanSum ys;
        for (std::size_t i : idx) ys.add(targets_[i]);
        const double mean = ys.value() / static_cast<double>(n);

        std::int32_t me = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, mean});

        if (depth >= max_depth_ || n < 2 * static_cast<std::size_t>(min_leaf_))
            return me;

        KahanSum sse_sum;
        for (std::size_t i : idx) {
            double z = targets_[i] - mean;
            sse_sum.add(z * z);
        }
        const double parent_sse = sse_sum.value();
        if (parent_sse <= 0.0) return me;  // constant target

        Best best = find_split(idx, mean, parent_sse);
        if (!best.found) return me;

        gains_[best.feature] += best.gain;

        std::vector<std::size_t> left, right;
        left.reserve(n);
        right.reserve(n);
        for (std::size_t i : idx) {
            if (d_.x[i * d_.n_features + best.feature] <= best.threshold)
                left.push_back(i);
            else
                right.push_back(i);
        }
        PMFUSE_CHECK(!left.empty() && !right.empty(), "tree split left a side empty");
        idx.clear();
        idx.shrink_to_fit();

        tree.nodes[me].feature = static_cast<std::int32_t>(best.feature);
        tree.nodes[me].threshold = best.threshold;
        std::int32_t l = grow(tree, std::move(left), depth + 1);
        tree.nodes[me].left = l;
        std::int32_t r = grow(tree, std::move(right), depth + 1);
        tree.nodes[me].right = r;
        return me;
    }

    std::vector<std::size_t> candidate_features() {
        const std::size_t p = d_.n_features;
        if (subset_k_ == 0 || subset_k_ >= p || rng_ == nullptr) {
            std::vector<std::size_t> all(p);
            for (std::size_t i = 0; i < p; ++i) all[i] = i;
            return all;
        }
        // Draw subset_k_ distinct features, then sort so the lowest-index
        // tie-break stays well defined.
        std::vector<std::size_t> pool(p);
        for (std::size_t i = 0; i < p; ++i) pool[i] = i;
        for (std::size_t i = 0; i < subset_k_; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rng_->next_below(p - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(subset_k_);
        std::sort(pool.begin(), pool.end());
        return pool;
    }

    // Gain evaluated by partitioning in node row order with plain
    // accumulation. Candidates that realize the same partition through
    // different features produce bit-identical gains here, which is what
    // makes the lowest-feature/lowest-threshold tie-break well defined.
    double canonical_gain(const std::vector<std::size_t>& idx, std::size_t f,
                          double thr, double parent_plain) const {
        double suml = 0.0, sumr = 0.0;
        std::size_t nl = 0, nr = 0;
        for (std::size_t i : idx) {
            if (d_.x[i * d_.n_features + f] <= thr) {
                suml += targets_[i];
                ++nl;
            } else {
                sumr += targets_[i];
                ++nr;
            }
        }
        double ml = suml / static_cast<double>(nl);
        double mr = sumr / static_cast<double>(nr);
        double ssel = 0.0, sser = 0.0;
        for (std::size_t i : idx) {
            double y = targets_[i];
            if (d_.x[i * d_.n_features + f] <= thr)
                ssel += (y - ml) * (y - ml);
            else
                sser += (y - mr) * (y - mr);
        }
        return parent_plain - ssel - sser;
    }

    Best find_split(const std::vector<std::size_t>& idx, double mean,
                    double parent_sse) {
        const std::size_t n = idx.size();
        struct Candidate {
            std::size_t feature;
            double threshold;
            double prefix_gain;
        };
        std::vector<Candidate> candidates;
        std::vector<std::pair<double, double>> xz(n);  // (feature value, centered y)
        double best_prefix = 0.0;
        for (std::size_t f : candidate_features()) {
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t r = idx[i];
                xz[i] = {d_.x[r * d_.n_features + f], targets_[r] - mean};
            }
            std::sort(xz.begin(), xz.end());
            if (xz.front().first == xz.back().first) continue;  // constant feature

            // Prefix scan over sorted rows; split between distinct values only.
            double lsum = 0.0, lsq = 0.0;
            double tsum = 0.0, tsq = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                tsum += xz[i].second;
                tsq += xz[i].second * xz[i].second;
            }
            for (std::size_t k = 1; k < n; ++k) {
                lsum += xz[k - 1].second;
                lsq += xz[k - 1].second * xz[k - 1].second;
                if (xz[k - 1].first == xz[k].first) continue;
                if (k < static_cast<std::size_t>(min_leaf_) ||
                    n - k < static_cast<std::size_t>(min_leaf_))
                    continue;
                double rsum = tsum - lsum, rsq = tsq - lsq;
                double sse_l = lsq - lsum * lsum / static_cast<double>(k);
                double sse_r = rsq - rsum * rsum / static_cast<double>(n - k);
                double gain = parent_sse - sse_l - sse_r;
                if (gain <= 0.0) continue;
                double a = xz[k - 1].first, b = xz[k].first;
                double thr = a + (b - a) / 2.0;
                if (!(thr >= a && thr < b)) thr = a;  // rounding guard
                candidates.push_back(Candidate{f, thr, gain});
                best_prefix = std::max(best_prefix, gain);
            }
        }
        if (candidates.empty()) return Best{};

        // Re-evaluate everything within rounding slop of the best and settle
        // ties canonically: strictly greater gain wins, otherwise the
        // first-seen candidate (lowest feature, then lowest threshold) stays.
        double parent_plain = 0.0;
        {
            double sum = 0.0;
            for (std::size_t i : idx) sum += targets_[i];
            double m = sum / static_cast<double>(n);
            for (std::size_t i : idx)
                parent_plain += (targets_[i] - m) * (targets_[i] - m);
        }
        double tol = 1e-9 * std::max(parent_sse, 1e-300);
        Best best;
        for (const Candidate& c : candidates) {
            if (c.prefix_gain < best_prefix - tol) continue;
            double gain = canonical_gain(idx, c.feature, c.threshold, parent_plain);
            if (gain > best.gain) best = Best{gain, c.feature, c.threshold, true};
        }
        return best;
    }

    const Dataset& d_;
    const std::vector<double>& targets_;
    int max_depth_;
    int min_leaf_;
    std::vector<double>& gains_;
    Rng* rng_;
    std::size_t subset_k_;
};

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

}  // namespace

TreeRegressor::TreeRegressor(Tree tree, std::vector<std::string> names,
                             std::vector<double> gains)
    : tree_(std::move(tree)), names_(std::move(names)), gains_(std::move(gains)) {}

double TreeRegressor::predict(std::span<const double> row) const {
    return tree_.predict(row);
}

ForestRegressor::ForestRegressor(std::vector<Tree> trees,
                                 std::vector<std::string> names,
                                 std::vector<double> gains)
    : trees_(std::move(trees)), names_(std::move(names)), gains_(std::move(gains)) {}

double ForestRegressor::predict(std::span<const double> row) const {
    KahanSum s;
    for (const Tree& t : trees_) s.add(t.predict(row));
    return s.value() / static_cast<double>(trees_.size());
}

GbtRegressor::GbtRegressor(double base, double learning_rate, std::vector<Tree> trees,
                           std::vector<std::string> names, std::vector<double> gains,
                           std::vector<double> stage_losses)
    : base_(base),
      learning_rate_(learning_rate),
      trees_(std::move(trees)),
      names_(std::move(names)),
      gains_(std::move(gains)),
      stage_losses_(std::move(stage_losses)) {}

double GbtRegressor::predict(std::span<const double> row) const {
    KahanSum s;
    s.add(base_);
    for (const Tree& t : trees_) s.add(learning_rate_ * t.predict(row));
    return s.value();
}

std::unique_ptr<Regressor> fit_tree(const Dataset& d, const TreeConfig& cfg) {
    d.validate();
    std::vector<double> gains(d.n_features, 0.0);
    TreeBuilder builder(d, d.y, cfg.max_depth, cfg.min_leaf, gains, nullptr, 0);
    Tree tree = builder.build(all_indices(d.n_samples()));
    return std::make_unique<TreeRegressor>(std::move(tree), d.feature_names,
                                           std::move(gains));
}

std::unique_ptr<Regressor> fit_forest(const Dataset& d, const ForestConfig& cfg) {
    d.validate();
    if (cfg.n_trees < 1) throw ValidationError("forest needs n_trees >= 1");
    const std::size_t n = d.n_samples();
    const std::size_t p = d.n_features;
    std::size_t subset_k = 0;
    if (cfg.sqrt_features && p > 1) {
        subset_k = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p))));
        if (subset_k >= p) subset_k = 0;
    }
    std::vector<double> gains(p, 0.0);
    std::vector<Tree> trees;
    trees.reserve(cfg.n_trees);
    for (int t = 0; t < cfg.n_trees; ++t) {
        Rng rng(substream_seed(cfg.seed, "forest_tree_" + std::to_string(t)));
        std::vector<std::size_t> idx;
        if (cfg.bootstrap) {
            idx.resize(n);
            for (std::size_t i = 0; i < n; ++i)
                idx[i] = static_cast<std::size_t>(rng.next_below(n));
        } else {
            idx = all_indices(n);
        }
        TreeBuilder builder(d, d.y, cfg.max_depth, cfg.min_leaf, gains, &rng, subset_k);
        trees.push_back(builder.build(std::move(idx)));
    }
    return std::make_unique<ForestRegressor>(std::move(trees), d.feature_names,
                                             std::move(gains));
}

std::unique_ptr<Regressor> fit_gbt(const Dataset& d, const GbtConfig& cfg) {
    d.validate();
    if (cfg.n_trees < 1) throw ValidationError("gbt needs n_trees >= 1");
    if (!(cfg.learning_rate > 0.0))
        throw ValidationError("gbt learning_rate must be > 0");
    const std::size_t n = d.n_samples();

    KahanSum ys;
    for (double v : d.y) ys.add(v);
    const double base = ys.value() / static_cast<double>(n);

    std::vector<double> residual(n);
    for (std::size_t i = 0; i < n; ++i) residual[i] = d.y[i] - base;

    auto loss_of = [&]() {
        KahanSum s;
        for (double r : residual) s.add(r * r);
        return s.value() / static_cast<double>(n);
    };

    std::vector<double> gains(d.n_features, 0.0);
    std::vector<Tree> trees;
    trees.reserve(cfg.n_trees);
    std::vector<double> losses;
    losses.reserve(cfg.n_trees + 1);
    losses.push_back(loss_of());

    for (int t = 0; t < cfg.n_trees; ++t) {
        TreeBuilder builder(d, residual, cfg.max_depth, cfg.min_leaf, gains,
                            nullptr, 0);
        Tree tree = builder.build(all_indices(n));
        for (std::size_t i = 0; i < n; ++i)
            residual[i] -= cfg.learning_rate * tree.predict(d.row(i));
        trees.push_back(std::move(tree));
        losses.push_back(loss_of());
    }
    return std::make_unique<GbtRegressor>(base, cfg.learning_rate, std::move(trees),
                                          d.feature_names, std::move(gains),
                                          std::move(losses));
}

GainTable gain_table(const Regressor& r) {
    const std::vector<double>* gains = nullptr;
    switch (r.kind()) {
        case RegressorKind::tree:
            gains = &static_cast<const TreeRegressor&>(r).gains();
            break;
        case RegressorKind::forest:
            gains = &static_cast<const ForestRegressor&>(r).gains();
            break;
        case RegressorKind::gbt:
            gains = &static_cast<const GbtRegressor&>(r).gains();
            break;
        default:
            throw ValidationError(std::string("gain_table unsupported for kind ") +
                                  kind_name(r.kind()));
    }
    return GainTable{r.feature_names(), *gains};
}

}  // namespace pmfuse::learn
