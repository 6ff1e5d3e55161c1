#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "conflux/error.hpp"

namespace conflux {

struct ForestConfig {
  int tree_count = 100;
  int max_depth = 8;
  int min_leaf = 5;
  int feature_subsample = 1;  // features tried per split
  double bootstrap_fraction = 1.0;
  std::uint64_t seed = 0;

  void validate(std::size_t feature_count) const {
    if (tree_count < 1) throw DataError("tree_count must be >= 1");
    if (max_depth < 1) throw DataError("max_depth must be >= 1");
    if (min_leaf < 1) throw DataError("min_leaf must be >= 1");
    if (feature_subsample < 1 || static_cast<std::size_t>(feature_subsample) > feature_count)
      throw DataError("feature_subsample must lie in [1, feature count]");
    if (!(bootstrap_fraction > 0.0 && bootstrap_fraction <= 1.0))
      throw DataError("bootstrap_fraction must lie in (0, 1]");
  }

  friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // x <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;  // positive-class fraction at a leaf
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  double predict(const Eigen::MatrixXd& X, Eigen::Index row) const {
    std::int32_t i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = X(row, n.feature) <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }
};

struct RandomForest {
  ForestConfig config;
  std::size_t feature_count = 0;
  std::vector<DecisionTree> trees;

  // Mean of the trees' leaf fractions, one entry per row of X.
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const {
    if (static_cast<std::size_t>(X.cols()) != feature_count)
      throw DataError("prediction matrix has " + std::to_string(X.cols()) + " columns, forest expects " +
                      std::to_string(feature_count));
    Eigen::VectorXd p = Eigen::VectorXd::Zero(X.rows());
    for (const auto& t : trees)
      for (Eigen::Index r = 0; r < X.rows(); ++r) p[r] += t.predict(X, r);
    return p / static_cast<double>(trees.size());
  }
};

// Training rows with every feature column presorted once; shared by all trees
// and forests trained on the same matrix.
class PresortedTable {
 public:
  PresortedTable(Eigen::MatrixXd X, std::vector<int> y) : X_(std::move(X)), y_(std::move(y)) {
    if (static_cast<std::size_t>(X_.rows()) != y_.size()) throw DataError("feature rows and targets differ in length");
    if (X_.rows() < 2) throw DataError("a forest needs at least two training rows");
    if (X_.cols() < 1) throw DataError("a forest needs at least one feature");
    if (!X_.allFinite()) throw DataError("non-finite feature value");
    for (int v : y_)
      if (v != 0 && v != 1) throw DataError("targets must be 0 or 1");
    order_.resize(static_cast<std::size_t>(X_.cols()));
    for (Eigen::Index f = 0; f < X_.cols(); ++f) {
      auto& o = order_[static_cast<std::size_t>(f)];
      o.resize(y_.size());
      std::iota(o.begin(), o.end(), 0u);
      std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return X_(a, f) < X_(b, f); });
    }
  }

  std::size_t rows() const { return y_.size(); }
  std::size_t features() const { return order_.size(); }
  const Eigen::MatrixXd& X() const { return X_; }
  const std::vector<int>& y() const { return y_; }
  const std::vector<std::uint32_t>& order(std::size_t f) const { return order_[f]; }

 private:
  Eigen::MatrixXd X_;
  std::vector<int> y_;
  std::vector<std::vector<std::uint32_t>> order_;
};

namespace detail {

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double score = 0.0;  // sum over children of (pos^2 + neg^2) / weight
};

}  // namespace detail

// CART with Gini impurity on bootstrap counts `weights` (0 = out of bag).
// Splits scan every midpoint between consecutive distinct values of the
// sampled features; ties go to the lowest feature index, then the lowest
// threshold.
inline DecisionTree train_tree(const PresortedTable& table, std::span<const std::uint32_t> weights,
                               const ForestConfig& cfg, std::mt19937_64& rng) {
  const std::size_t F = table.features();
  const auto& X = table.X();
  const auto& y = table.y();

  std::vector<std::vector<std::uint32_t>> lists(F);
  for (std::size_t f = 0; f < F; ++f) {
    lists[f].reserve(table.rows());
    for (auto i : table.order(f))
      if (weights[i] > 0) lists[f].push_back(i);
  }
  DecisionTree tree;
  if (lists[0].empty()) {
    tree.nodes.push_back({});
    return tree;
  }

  struct Pending {
    std::int32_t node;
    std::size_t begin, end;
    int depth;
  };
  std::vector<Pending> stack;
  tree.nodes.push_back({});
  stack.push_back({0, 0, lists[0].size(), 0});

  std::vector<std::uint8_t> goes_left(table.rows(), 0);
  std::vector<std::uint32_t> buffer;
  std::vector<std::size_t> feature_pool(F);
  const auto k = static_cast<std::size_t>(std::min<int>(cfg.feature_subsample, static_cast<int>(F)));

  while (!stack.empty()) {
    const Pending cur = stack.back();
    stack.pop_back();

    double W = 0.0, P = 0.0;
    for (std::size_t p = cur.begin; p < cur.end; ++p) {
      const auto i = lists[0][p];
      W += weights[i];
      P += weights[i] * static_cast<double>(y[i]);
    }
    auto& node = tree.nodes[static_cast<std::size_t>(cur.node)];
    node.value = P / W;
    if (cur.depth >= cfg.max_depth || P == 0.0 || P == W || W < 2.0 * cfg.min_leaf) continue;

    std::iota(feature_pool.begin(), feature_pool.end(), std::size_t{0});
    for (std::size_t j = 0; j < k; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, F - 1);
      std::swap(feature_pool[j], feature_pool[pick(rng)]);
    }
    std::vector<std::size_t> tried(feature_pool.begin(), feature_pool.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(tried.begin(), tried.end());

    const double parent_score = (P * P + (W - P) * (W - P)) / W;
    detail::SplitCandidate best;
    best.score = parent_score;
    for (std::size_t f : tried) {
      const auto& list = lists[f];
      const auto fe = static_cast<Eigen::Index>(f);
      double wl = 0.0, pl = 0.0;
      for (std::size_t p = cur.begin; p + 1 < cur.end; ++p) {
        const auto i = list[p];
        wl += weights[i];
        pl += weights[i] * static_cast<double>(y[i]);
        const double a = X(i, fe);
        const double b = X(list[p + 1], fe);
        if (!(b > a)) continue;
        const double wr = W - wl;
        if (wl < cfg.min_leaf || wr < cfg.min_leaf) continue;
        const double pr = P - pl;
        const double score = (pl * pl + (wl - pl) * (wl - pl)) / wl + (pr * pr + (wr - pr) * (wr - pr)) / wr;
        if (score > best.score * (1.0 + 1e-12)) {
          double thr = a + 0.5 * (b - a);
          if (!(thr < b)) thr = a;
          best = {static_cast<int>(f), thr, score};
        }
      }
    }
    if (best.feature < 0) continue;

    const auto bf = static_cast<Eigen::Index>(best.feature);
    std::size_t n_left = 0;
    for (std::size_t p = cur.begin; p < cur.end; ++p) {
      const auto i = lists[0][p];
      goes_left[i] = X(i, bf) <= best.threshold ? 1 : 0;
      n_left += goes_left[i];
    }
    for (std::size_t f = 0; f < F; ++f) {
      auto& list = lists[f];
      buffer.clear();
      std::size_t w = cur.begin;
      for (std::size_t p = cur.begin; p < cur.end; ++p) {
        const auto i = list[p];
        if (goes_left[i]) list[w++] = i;
        else buffer.push_back(i);
      }
      std::copy(buffer.begin(), buffer.end(), list.begin() + static_cast<std::ptrdiff_t>(w));
    }

    const auto left_id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes.push_back({});
    auto& parent = tree.nodes[static_cast<std::size_t>(cur.node)];
    parent.feature = best.feature;
    parent.threshold = best.threshold;
    parent.left = left_id;
    parent.right = left_id + 1;
    // Right pushed first so the left subtree is expanded first.
    stack.push_back({left_id + 1, cur.begin + n_left, cur.end, cur.depth + 1});
    stack.push_back({left_id, cur.begin, cur.begin + n_left, cur.depth + 1});
  }
  return tree;
}

inline std::vector<std::uint32_t> bootstrap_counts(std::size_t n, double fraction, std::mt19937_64& rng) {
  const auto draws = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  std::vector<std::uint32_t> w(n, 0);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t d = 0; d < draws; ++d) ++w[pick(rng)];
  return w;
}

inline RandomForest train_forest(const ForestConfig& config, const PresortedTable& table) {
  config.validate(table.features());
  RandomForest forest;
  forest.config = config;
  forest.feature_count = table.features();
  forest.trees.reserve(static_cast<std::size_t>(config.tree_count));
  std::mt19937_64 rng(config.seed);
  for (int t = 0; t < config.tree_count; ++t) {
    const auto w = bootstrap_counts(table.rows(), config.bootstrap_fraction, rng);
    forest.trees.push_back(train_tree(table, w, config, rng));
  }
  return forest;
}

inline RandomForest train_forest(const ForestConfig& config, const Eigen::MatrixXd& X, std::span<const int> y) {
  return train_forest(config, PresortedTable(X, std::vector<int>(y.begin(), y.end())));
}

}  // namespace conflux
