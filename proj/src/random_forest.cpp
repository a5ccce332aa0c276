#include "djf/random_forest.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace djf {

namespace {

double gini(int n0, int n1) {
    const int n = n0 + n1;
    if (n == 0) return 0.0;
    const double p0 = double(n0) / n, p1 = double(n1) / n;
    return 1.0 - p0 * p0 - p1 * p1;
}

}  // namespace

int RandomForest::build_node(Tree& tree,
                             const std::vector<std::vector<double>>& features,
                             const std::vector<int>& labels,
                             std::vector<int>& indices, int begin, int end,
                             int depth, const RandomForestConfig& cfg, Rng& rng) {
    int n0 = 0, n1 = 0;
    for (int i = begin; i < end; ++i) (labels[indices[i]] ? n1 : n0)++;
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[node_id].label = (n1 > n0) ? 1 : 0;

    if (depth >= cfg.max_depth || n0 == 0 || n1 == 0 ||
        end - begin <= 2 * cfg.min_leaf)
        return node_id;

    // exhaustive best Gini split over all features and midpoints
    double best_impurity = std::numeric_limits<double>::max();
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<int> sorted(indices.begin() + begin, indices.begin() + end);
    for (int f = 0; f < n_features_; ++f) {
        std::sort(sorted.begin(), sorted.end(), [&](int a, int b) {
            return features[a][f] < features[b][f];
        });
        int l0 = 0, l1 = 0;
        for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
            (labels[sorted[i]] ? l1 : l0)++;
            if (features[sorted[i]][f] == features[sorted[i + 1]][f]) continue;
            const int r0 = n0 - l0, r1 = n1 - l1;
            const int nl = l0 + l1, nr = r0 + r1;
            if (nl < cfg.min_leaf || nr < cfg.min_leaf) continue;
            const double imp = (nl * gini(l0, l1) + nr * gini(r0, r1)) / (nl + nr);
            if (imp < best_impurity) {
                best_impurity = imp;
                best_feature = f;
                best_threshold =
                    0.5 * (features[sorted[i]][f] + features[sorted[i + 1]][f]);
            }
        }
    }
    if (best_feature < 0) return node_id;

    auto mid = std::partition(indices.begin() + begin, indices.begin() + end,
                              [&](int idx) {
                                  return features[idx][best_feature] <= best_threshold;
                              });
    const int split = static_cast<int>(mid - indices.begin());
    if (split == begin || split == end) return node_id;

    tree.nodes[node_id].feature = best_feature;
    tree.nodes[node_id].threshold = best_threshold;
    const int left =
        build_node(tree, features, labels, indices, begin, split, depth + 1, cfg, rng);
    const int right =
        build_node(tree, features, labels, indices, split, end, depth + 1, cfg, rng);
    tree.nodes[node_id].left = left;
    tree.nodes[node_id].right = right;
    return node_id;
}

void RandomForest::train(const std::vector<std::vector<double>>& features,
                         const std::vector<int>& labels,
                         const RandomForestConfig& cfg) {
    if (features.empty() || features.size() != labels.size())
        throw std::invalid_argument("random forest: empty or mismatched training data");
    n_features_ = static_cast<int>(features[0].size());
    trees_.clear();
    Rng rng(cfg.seed);
    const int n = static_cast<int>(features.size());
    for (int t = 0; t < cfg.n_trees; ++t) {
        std::vector<int> boot(n);
        for (int i = 0; i < n; ++i)
            boot[i] = static_cast<int>(rng.uniform_index(n));
        Tree tree;
        build_node(tree, features, labels, boot, 0, n, 0, cfg, rng);
        trees_.push_back(std::move(tree));
    }
}

double RandomForest::predict_proba(const std::vector<double>& x) const {
    if (trees_.empty()) throw std::logic_error("random forest: not trained");
    if (static_cast<int>(x.size()) != n_features_)
        throw std::invalid_argument("random forest: feature size mismatch");
    int votes = 0;
    for (const auto& tree : trees_) {
        int node = 0;
        while (tree.nodes[node].feature >= 0) {
            const auto& nd = tree.nodes[node];
            node = (x[nd.feature] <= nd.threshold) ? nd.left : nd.right;
        }
        votes += tree.nodes[node].label;
    }
    return double(votes) / trees_.size();
}

int RandomForest::predict(const std::vector<double>& x) const {
    return predict_proba(x) >= 0.5 ? 1 : 0;
}

void RandomForest::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "djf-forest v1\n";
    out << n_features_ << " " << trees_.size() << "\n";
    out.precision(17);
    for (const auto& tree : trees_) {
        out << tree.nodes.size() << "\n";
        for (const auto& n : tree.nodes)
            out << n.feature << " " << n.threshold << " " << n.left << " "
                << n.right << " " << n.label << "\n";
    }
}

RandomForest RandomForest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string header;
    std::getline(in, header);
    if (header != "djf-forest v1")
        throw std::runtime_error(path + ": not a djf-forest v1 file");
    RandomForest rf;
    std::size_t n_trees;
    in >> rf.n_features_ >> n_trees;
    rf.trees_.resize(n_trees);
    for (auto& tree : rf.trees_) {
        std::size_t n_nodes;
        in >> n_nodes;
        tree.nodes.resize(n_nodes);
        for (auto& n : tree.nodes)
            in >> n.feature >> n.threshold >> n.left >> n.right >> n.label;
    }
    if (!in) throw std::runtime_error(path + ": truncated forest file");
    return rf;
}

}  // namespace djf
