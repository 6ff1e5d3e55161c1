#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "conflux/error.hpp"
#include "conflux/forest.hpp"
#include "conflux/parallel.hpp"
#include "conflux/text.hpp"

namespace conflux {

template <class T>
struct Range {
  T min;
  T max;
};

// Per-forest hyperparameter ranges for the jittered ensemble.
struct JitterRanges {
  Range<int> tree_count{50, 150};
  Range<int> max_depth{4, 12};
  Range<int> min_leaf{5, 50};
  Range<int> feature_subsample{1, 2};
  Range<double> bootstrap_fraction{0.6, 1.0};

  void validate() const {
    auto ok = [](auto r) { return r.min <= r.max; };
    if (!ok(tree_count) || !ok(max_depth) || !ok(min_leaf) || !ok(feature_subsample) || !ok(bootstrap_fraction))
      throw DataError("jitter range with min > max");
  }
};

// Uniform draw of each hyperparameter inside its range; the seed of the
// returned config is the draw seed.
inline ForestConfig jitter_config(const ForestConfig& base, const JitterRanges& ranges, std::uint64_t seed) {
  ranges.validate();
  std::mt19937_64 rng(seed);
  auto draw_int = [&](Range<int> r) { return std::uniform_int_distribution<int>(r.min, r.max)(rng); };
  ForestConfig c = base;
  c.tree_count = draw_int(ranges.tree_count);
  c.max_depth = draw_int(ranges.max_depth);
  c.min_leaf = draw_int(ranges.min_leaf);
  c.feature_subsample = draw_int(ranges.feature_subsample);
  const auto b = ranges.bootstrap_fraction;
  c.bootstrap_fraction = b.min == b.max ? b.min : std::uniform_real_distribution<double>(b.min, b.max)(rng);
  c.seed = seed;
  return c;
}

inline constexpr int kEnsembleFormatVersion = 1;

struct Ensemble {
  std::vector<std::string> feature_names;
  std::vector<RandomForest> models;

  std::size_t size() const { return models.size(); }
};

struct EnsemblePrediction {
  Eigen::VectorXd mean;
  Eigen::MatrixXd per_model;  // rows x models
};

// n forests with jittered configs. Model i uses jitter seed
// derive_seed(master_seed, i), so serial and parallel runs agree. No
// undersampling and no calibration are applied.
inline Ensemble train_ensemble(const Eigen::MatrixXd& X, std::span<const int> y, std::vector<std::string> feature_names,
                               int n, std::uint64_t master_seed, const JitterRanges& ranges = {},
                               const ForestConfig& base = {}, int jobs = 1) {
  if (n < 1) throw DataError("ensemble size must be >= 1");
  if (feature_names.size() != static_cast<std::size_t>(X.cols()))
    throw DataError("feature names do not match the training matrix");
  const PresortedTable table(X, std::vector<int>(y.begin(), y.end()));
  Ensemble e;
  e.feature_names = std::move(feature_names);
  e.models.resize(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), jobs, [&](std::size_t i) {
    auto cfg = jitter_config(base, ranges, derive_seed(master_seed, i));
    cfg.feature_subsample = std::min<int>(cfg.feature_subsample, static_cast<int>(table.features()));
    e.models[i] = train_forest(cfg, table);
  });
  return e;
}

inline EnsemblePrediction predict(const Ensemble& e, const Eigen::MatrixXd& X, int jobs = 1) {
  if (e.models.empty()) throw DataError("empty ensemble");
  if (static_cast<std::size_t>(X.cols()) != e.feature_names.size())
    throw DataError("prediction matrix has " + std::to_string(X.cols()) + " columns, ensemble expects " +
                    std::to_string(e.feature_names.size()));
  EnsemblePrediction p;
  p.per_model.resize(X.rows(), static_cast<Eigen::Index>(e.size()));
  parallel_for(e.size(), jobs, [&](std::size_t m) { p.per_model.col(static_cast<Eigen::Index>(m)) = e.models[m].predict(X); });
  p.mean = p.per_model.rowwise().mean();
  return p;
}

// Linear-interpolated quantile of one row of per-model probabilities.
inline double row_quantile(const Eigen::MatrixXd& per_model, Eigen::Index row, double q) {
  std::vector<double> v(static_cast<std::size_t>(per_model.cols()));
  for (Eigen::Index c = 0; c < per_model.cols(); ++c) v[static_cast<std::size_t>(c)] = per_model(row, c);
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline nlohmann::json to_json(const ForestConfig& c) {
  return {{"tree_count", c.tree_count},   {"max_depth", c.max_depth},
          {"min_leaf", c.min_leaf},       {"feature_subsample", c.feature_subsample},
          {"bootstrap_fraction", c.bootstrap_fraction}, {"seed", c.seed}};
}

inline nlohmann::json to_json(const Ensemble& e) {
  using nlohmann::json;
  json models = json::array();
  for (const auto& f : e.models) {
    json trees = json::array();
    for (const auto& t : f.trees) {
      json feat = json::array(), thr = json::array(), left = json::array(), right = json::array(),
           val = json::array();
      for (const auto& n : t.nodes) {
        feat.push_back(n.feature);
        thr.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        val.push_back(n.value);
      }
      trees.push_back({{"feature", feat}, {"threshold", thr}, {"left", left}, {"right", right}, {"value", val}});
    }
    models.push_back({{"config", to_json(f.config)}, {"feature_count", f.feature_count}, {"trees", trees}});
  }
  return {{"format", "conflux-ensemble"},
          {"version", kEnsembleFormatVersion},
          {"features", e.feature_names},
          {"models", models}};
}

inline Ensemble ensemble_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "conflux-ensemble") throw DataError("not an ensemble file");
    if (j.at("version").get<int>() != kEnsembleFormatVersion)
      throw DataError("unsupported ensemble version " + std::to_string(j.at("version").get<int>()));
    Ensemble e;
    e.feature_names = j.at("features").get<std::vector<std::string>>();
    for (const auto& m : j.at("models")) {
      RandomForest f;
      const auto& c = m.at("config");
      f.config = {c.at("tree_count").get<int>(), c.at("max_depth").get<int>(), c.at("min_leaf").get<int>(),
                  c.at("feature_subsample").get<int>(), c.at("bootstrap_fraction").get<double>(),
                  c.at("seed").get<std::uint64_t>()};
      f.feature_count = m.at("feature_count").get<std::size_t>();
      for (const auto& t : m.at("trees")) {
        DecisionTree tree;
        const auto feat = t.at("feature").get<std::vector<std::int32_t>>();
        const auto thr = t.at("threshold").get<std::vector<double>>();
        const auto left = t.at("left").get<std::vector<std::int32_t>>();
        const auto right = t.at("right").get<std::vector<std::int32_t>>();
        const auto val = t.at("value").get<std::vector<double>>();
        if (thr.size() != feat.size() || left.size() != feat.size() || right.size() != feat.size() ||
            val.size() != feat.size() || feat.empty())
          throw DataError("malformed tree in ensemble file");
        for (std::size_t i = 0; i < feat.size(); ++i) {
          const auto n = static_cast<std::int32_t>(feat.size());
          if (feat[i] >= 0 && (left[i] <= 0 || left[i] >= n || right[i] <= 0 || right[i] >= n ||
                               static_cast<std::size_t>(feat[i]) >= f.feature_count))
            throw DataError("malformed tree node in ensemble file");
          tree.nodes.push_back({feat[i], thr[i], left[i], right[i], val[i]});
        }
        f.trees.push_back(std::move(tree));
      }
      e.models.push_back(std::move(f));
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed ensemble file: ") + ex.what());
  }
}

inline void save_ensemble(const std::string& path, const Ensemble& e) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << to_json(e).dump() << '\n';
}

inline Ensemble load_ensemble(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ensemble file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed ensemble file: ") + ex.what());
  }
  return ensemble_from_json(j);
}

}  // namespace conflux
