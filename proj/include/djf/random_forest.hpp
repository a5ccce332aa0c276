#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "djf/rng.hpp"

namespace djf {

struct RandomForestConfig {
    int n_trees = 50;
    int max_depth = 4;
    int min_leaf = 1;
    std::uint64_t seed = 1;
};

/// Small binary-classification random forest (Gini splits, bootstrap
/// sampling) for fusing detector probabilities.
class RandomForest {
public:
    void train(const std::vector<std::vector<double>>& features,
               const std::vector<int>& labels, const RandomForestConfig& cfg);

    bool trained() const { return !trees_.empty(); }
    /// Fraction of trees voting for label 1.
    double predict_proba(const std::vector<double>& x) const;
    /// Majority vote.
    int predict(const std::vector<double>& x) const;

    void save(const std::string& path) const;
    static RandomForest load(const std::string& path);

private:
    struct Node {
        int feature = -1;       // -1 for leaves
        double threshold = 0.0;  // go left if x[feature] <= threshold
        int left = -1, right = -1;
        int label = 0;  // leaf majority label
    };
    struct Tree {
        std::vector<Node> nodes;
    };

    int build_node(Tree& tree, const std::vector<std::vector<double>>& features,
                   const std::vector<int>& labels, std::vector<int>& indices,
                   int begin, int end, int depth, const RandomForestConfig& cfg,
                   Rng& rng);

    std::vector<Tree> trees_;
    int n_features_ = 0;
};

}  // namespace djf
