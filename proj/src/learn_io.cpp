#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

#include "pmfuse/errors.hpp"
#include "pmfuse/learn.hpp"
#include "pmfuse/util.hpp"

// Versioned text model format. Tree kinds share the flat dump
// `tree_id,node_id,feature,threshold,left,right,leaf_value`; leaves carry
// feature = -1. Doubles use shortest round-trip formatting so a reloaded
// model predicts bit-for-bit.

namespace pmfuse::learn {

namespace {

void write_header(std::ostream& out, const Regressor& r) {
    out << "pmfuse-model v1\n";
    out << "kind " << kind_name(r.kind()) << "\n";
    out << "features";
    for (const auto& n : r.feature_names()) out << ' ' << n;
    out << "\n";
}

void write_trees(std::ostream& out, const std::vector<Tree>& trees) {
    out << "tree_table\n";
    out << "tree_id,node_id,feature,threshold,left,right,leaf_value\n";
    for (std::size_t t = 0; t < trees.size(); ++t) {
        const auto& nodes = trees[t].nodes;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const TreeNode& nd = nodes[i];
            out << t << ',' << i << ',' << nd.feature << ','
                << format_double(nd.threshold) << ',' << nd.left << ',' << nd.right
                << ',' << format_double(nd.value) << "\n";
        }
    }
    out << "end_tree_table\n";
}

void write_gains(std::ostream& out, const std::vector<std::string>& names,
                 const std::vector<double>& gains) {
    for (std::size_t i = 0; i < names.size(); ++i)
        out << "gain " << names[i] << ' ' << format_double(gains[i]) << "\n";
}

std::vector<Tree> read_trees(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) ||
        line != "tree_id,node_id,feature,threshold,left,right,leaf_value")
        throw DataError("model file: bad tree table header");
    std::vector<Tree> trees;
    while (std::getline(in, line)) {
        if (line == "end_tree_table") return trees;
        auto f = split_view(line, ',');
        if (f.size() != 7) throw DataError("model file: bad tree row: " + line);
        auto tid = parse_int(f[0]);
        auto nid = parse_int(f[1]);
        auto feat = parse_int(f[2]);
        auto thr = parse_double(f[3]);
        auto left = parse_int(f[4]);
        auto right = parse_int(f[5]);
        auto value = parse_double(f[6]);
        if (!tid || !nid || !feat || !thr || !left || !right || !value)
            throw DataError("model file: bad tree row: " + line);
        if (*tid == static_cast<std::int64_t>(trees.size())) trees.emplace_back();
        if (*tid != static_cast<std::int64_t>(trees.size()) - 1)
            throw DataError("model file: tree ids out of order");
        Tree& t = trees.back();
        if (*nid != static_cast<std::int64_t>(t.nodes.size()))
            throw DataError("model file: node ids out of order");
        t.nodes.push_back(TreeNode{static_cast<std::int32_t>(*feat), *thr,
                                   static_cast<std::int32_t>(*left),
                                   static_cast<std::int32_t>(*right), *value});
    }
    throw DataError("model file: unterminated tree table");
}

struct KeyValues {
    std::vector<std::pair<std::string, std::string>> items;
    const std::string* find(const std::string& key) const {
        for (const auto& [k, v] : items)
            if (k == key) return &v;
        return nullptr;
    }
    const std::string& require(const std::string& key) const {
        const std::string* v = find(key);
        if (!v) throw DataError("model file: missing key '" + key + "'");
        return *v;
    }
};

double require_double(const KeyValues& kv, const std::string& key) {
    auto v = parse_double(kv.require(key));
    if (!v) throw DataError("model file: bad number for key '" + key + "'");
    return *v;
}

}  // namespace

void TreeRegressor::serialize(std::ostream& out) const {
    write_header(out, *this);
    write_gains(out, names_, gains_);
    write_trees(out, {tree_});
    out << "end\n";
}

void ForestRegressor::serialize(std::ostream& out) const {
    write_header(out, *this);
    write_gains(out, names_, gains_);
    write_trees(out, trees_);
    out << "end\n";
}

void GbtRegressor::serialize(std::ostream& out) const {
    write_header(out, *this);
    out << "base " << format_double(base_) << "\n";
    out << "learning_rate " << format_double(learning_rate_) << "\n";
    write_gains(out, names_, gains_);
    write_trees(out, trees_);
    out << "end\n";
}

void LinearRegressor::serialize(std::ostream& out) const {
    write_header(out, *this);
    for (std::size_t j = 0; j < coef_.size(); ++j)
        out << "coef " << names_[j] << ' ' << format_double(coef_[j]) << "\n";
    out << "intercept " << format_double(intercept_) << "\n";
    out << "end\n";
}

void AverageRegressor::serialize(std::ostream& out) const {
    write_header(out, *this);
    out << "passthrough " << names_[feature_index_] << "\n";
    out << "end\n";
}

void KnnRegressor::serialize(std::ostream& out) const {
    write_header(out, *this);
    out << "k " << k_ << "\n";
    out << "n " << targets_.size() << "\n";
    auto write_vec = [&](const char* tag, const std::vector<double>& v) {
        out << tag;
        for (double x : v) out << ' ' << format_double(x);
        out << "\n";
    };
    write_vec("means", means_);
    write_vec("stds", stds_);
    const std::size_t p = means_.size();
    for (std::size_t i = 0; i < targets_.size(); ++i) {
        out << "row " << format_double(targets_[i]);
        for (std::size_t j = 0; j < p; ++j)
            out << ' ' << format_double(scaled_x_[i * p + j]);
        out << "\n";
    }
    out << "end\n";
}

std::unique_ptr<Regressor> parse_model(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "pmfuse-model v1")
        throw DataError("model file: bad magic line");

    std::string kind_str;
    std::vector<std::string> names;
    KeyValues kv;
    std::vector<Tree> trees;
    std::vector<double> gains;
    std::vector<double> knn_means, knn_stds, knn_scaled, knn_targets;
    std::vector<std::pair<std::string, double>> coefs;
    bool have_trees = false;

    auto parse_vec = [](const std::string& rest) {
        std::vector<double> out;
        std::istringstream ss(rest);
        std::string tok;
        while (ss >> tok) {
            auto v = parse_double(tok);
            if (!v) throw DataError("model file: bad vector entry: " + tok);
            out.push_back(*v);
        }
        return out;
    };

    std::vector<std::pair<std::string, double>> gain_entries;
    while (std::getline(in, line)) {
        if (line == "end") break;
        if (line == "tree_table") {
            trees = read_trees(in);
            have_trees = true;
            continue;
        }
        auto sp = line.find(' ');
        std::string key = sp == std::string::npos ? line : line.substr(0, sp);
        std::string rest = sp == std::string::npos ? "" : line.substr(sp + 1);
        if (key == "kind") {
            kind_str = rest;
        } else if (key == "features") {
            std::istringstream ss(rest);
            std::string tok;
            while (ss >> tok) names.push_back(tok);
        } else if (key == "gain") {
            auto sp2 = rest.find(' ');
            if (sp2 == std::string::npos)
                throw DataError("model file: bad gain line: " + line);
            auto v = parse_double(std::string_view(rest).substr(sp2 + 1));
            if (!v) throw DataError("model file: bad gain value: " + line);
            gain_entries.emplace_back(rest.substr(0, sp2), *v);
        } else if (key == "coef") {
            auto sp2 = rest.find(' ');
            if (sp2 == std::string::npos)
                throw DataError("model file: bad coef line: " + line);
            auto v = parse_double(std::string_view(rest).substr(sp2 + 1));
            if (!v) throw DataError("model file: bad coef value: " + line);
            coefs.emplace_back(rest.substr(0, sp2), *v);
        } else if (key == "means") {
            knn_means = parse_vec(rest);
        } else if (key == "stds") {
            knn_stds = parse_vec(rest);
        } else if (key == "row") {
            auto vals = parse_vec(rest);
            if (vals.empty()) throw DataError("model file: empty knn row");
            knn_targets.push_back(vals.front());
            knn_scaled.insert(knn_scaled.end(), vals.begin() + 1, vals.end());
        } else {
            kv.items.emplace_back(key, rest);
        }
    }
    if (kind_str.empty()) throw DataError("model file: missing kind");
    RegressorKind kind = kind_from_name(kind_str);

    gains.assign(names.size(), 0.0);
    for (const auto& [name, g] : gain_entries) {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end())
            throw DataError("model file: gain for unknown feature " + name);
        gains[static_cast<std::size_t>(it - names.begin())] = g;
    }

    switch (kind) {
        case RegressorKind::tree: {
            if (!have_trees || trees.size() != 1)
                throw DataError("model file: tree kind needs exactly one tree");
            return std::make_unique<TreeRegressor>(std::move(trees[0]),
                                                   std::move(names), std::move(gains));
        }
        case RegressorKind::forest: {
            if (!have_trees || trees.empty())
                throw DataError("model file: forest kind needs trees");
            return std::make_unique<ForestRegressor>(std::move(trees),
                                                     std::move(names), std::move(gains));
        }
        case RegressorKind::gbt: {
            if (!have_trees || trees.empty())
                throw DataError("model file: gbt kind needs trees");
            double base = require_double(kv, "base");
            double lr = require_double(kv, "learning_rate");
            return std::make_unique<GbtRegressor>(base, lr, std::move(trees),
                                                  std::move(names), std::move(gains),
                                                  std::vector<double>{});
        }
        case RegressorKind::ols:
        case RegressorKind::lasso: {
            std::vector<double> coef(names.size(), 0.0);
            for (const auto& [name, v] : coefs) {
                auto it = std::find(names.begin(), names.end(), name);
                if (it == names.end())
                    throw DataError("model file: coef for unknown feature " + name);
                coef[static_cast<std::size_t>(it - names.begin())] = v;
            }
            double intercept = require_double(kv, "intercept");
            return std::make_unique<LinearRegressor>(kind, std::move(coef), intercept,
                                                     std::move(names));
        }
        case RegressorKind::knn: {
            auto k = parse_int(kv.require("k"));
            auto nrows = parse_int(kv.require("n"));
            if (!k || !nrows) throw DataError("model file: bad knn header");
            if (knn_targets.size() != static_cast<std::size_t>(*nrows) ||
                knn_means.size() != names.size() || knn_stds.size() != names.size() ||
                knn_scaled.size() != knn_targets.size() * names.size())
                throw DataError("model file: knn table size mismatch");
            return std::make_unique<KnnRegressor>(
                static_cast<int>(*k), std::move(knn_means), std::move(knn_stds),
                std::move(knn_scaled), std::move(knn_targets), std::move(names));
        }
        case RegressorKind::average: {
            const std::string& feat = kv.require("passthrough");
            auto it = std::find(names.begin(), names.end(), feat);
            if (it == names.end())
                throw DataError("model file: passthrough feature not in list");
            return std::make_unique<AverageRegressor>(
                static_cast<std::size_t>(it - names.begin()), std::move(names));
        }
    }
    throw InternalError("unreachable model kind");
}

void save_model(const Regressor& r, const std::string& path) {
    std::ostringstream ss;
    r.serialize(ss);
    write_text_file(path, ss.str());
}

std::unique_ptr<Regressor> load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open model file: " + path);
    return parse_model(in);
}

}  // namespace pmfuse::learn
