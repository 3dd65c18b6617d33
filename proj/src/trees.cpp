#include <algorithm>
#include <numeric>

#include "catgen/learners.hpp"
#include "catgen/rng.hpp"

namespace catgen::detail {

namespace {

struct SplitCandidate {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

struct NodeWork {
    std::vector<int> rows;
    int depth;
    int node_index;
};

// Best squared-error split for one feature over the node rows.
SplitCandidate best_split_for_feature(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                      const std::vector<int>& rows, int feature, int min_leaf,
                                      std::vector<std::pair<double, double>>& scratch) {
    scratch.clear();
    for (int r : rows) scratch.emplace_back(X(r, feature), y[r]);
    std::sort(scratch.begin(), scratch.end());

    const int m = static_cast<int>(scratch.size());
    double total = 0.0;
    for (const auto& [x, t] : scratch) total += t;

    SplitCandidate best;
    double left_sum = 0.0;
    const double parent_score = total * total / m;
    for (int i = 0; i + 1 < m; ++i) {
        left_sum += scratch[i].second;
        if (scratch[i].first == scratch[i + 1].first) continue;
        int n_left = i + 1, n_right = m - n_left;
        if (n_left < min_leaf || n_right < min_leaf) continue;
        double right_sum = total - left_sum;
        double score = left_sum * left_sum / n_left + right_sum * right_sum / n_right;
        double gain = score - parent_score;
        if (gain > best.gain) {
            best.gain = gain;
            best.feature = feature;
            best.threshold = 0.5 * (scratch[i].first + scratch[i + 1].first);
        }
    }
    return best;
}

} // namespace

TreeModel fit_regression_tree(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                              const std::vector<int>& rows, int max_depth, int min_leaf,
                              int mtry, std::mt19937_64& rng) {
    const int p = static_cast<int>(features.cols());
    TreeModel tree;
    tree.nodes.reserve(64);

    std::vector<std::pair<double, double>> scratch;
    std::vector<int> feature_pool(p);
    std::iota(feature_pool.begin(), feature_pool.end(), 0);

    std::vector<NodeWork> stack;
    tree.nodes.emplace_back();
    stack.push_back({rows, 0, 0});

    while (!stack.empty()) {
        NodeWork work = std::move(stack.back());
        stack.pop_back();
        TreeNode& node = tree.nodes[work.node_index];

        const int m = static_cast<int>(work.rows.size());
        double sum = 0.0, sumsq = 0.0;
        for (int r : work.rows) {
            sum += targets[r];
            sumsq += targets[r] * targets[r];
        }
        node.value = sum / m;
        double sse = sumsq - sum * sum / m;

        if (work.depth >= max_depth || m < 2 * min_leaf || sse <= 1e-12) continue;

        // Sample the feature subset without replacement (partial Fisher-Yates).
        int k = std::min(mtry, p);
        if (k < p) {
            for (int i = 0; i < k; ++i) {
                std::uniform_int_distribution<int> pick(i, p - 1);
                std::swap(feature_pool[i], feature_pool[pick(rng)]);
            }
        }

        SplitCandidate best;
        for (int i = 0; i < k; ++i) {
            SplitCandidate cand = best_split_for_feature(features, targets, work.rows,
                                                         feature_pool[i], min_leaf, scratch);
            if (cand.feature < 0 || cand.gain <= 0.0) continue;
            if (best.feature < 0 || cand.gain > best.gain ||
                (cand.gain == best.gain && cand.feature < best.feature))
                best = cand;
        }
        if (best.feature < 0) continue;

        std::vector<int> left_rows, right_rows;
        left_rows.reserve(m);
        right_rows.reserve(m);
        for (int r : work.rows)
            (features(r, best.feature) <= best.threshold ? left_rows : right_rows).push_back(r);

        int left_index = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        TreeNode& parent = tree.nodes[work.node_index]; // re-fetch, vector may have grown
        parent.feature = best.feature;
        parent.threshold = best.threshold;
        parent.left = left_index;
        parent.right = left_index + 1;

        stack.push_back({std::move(right_rows), work.depth + 1, left_index + 1});
        stack.push_back({std::move(left_rows), work.depth + 1, left_index});
    }
    return tree;
}

} // namespace catgen::detail

namespace catgen {

double TreeModel::predict_row(const double* x) const {
    int idx = 0;
    while (nodes[idx].feature >= 0)
        idx = x[nodes[idx].feature] <= nodes[idx].threshold ? nodes[idx].left : nodes[idx].right;
    return nodes[idx].value;
}

} // namespace catgen
