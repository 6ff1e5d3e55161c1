#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "conflux/data_model.hpp"
#include "conflux/error.hpp"
#include "conflux/evaluation.hpp"
#include "conflux/features.hpp"
#include "conflux/forest.hpp"
#include "conflux/parallel.hpp"

namespace conflux {

struct SelectionStep {
  std::string feature;
  double score = 0.0;  // validation score after adding `feature`
};

struct SelectionTrace {
  std::vector<SelectionStep> steps;
  std::vector<std::string> chosen;  // prefix of steps before the first dip
  bool dipped = false;
};

// Scores a candidate subset given as column indices, in selection order.
using SubsetEvaluator = std::function<double(const std::vector<std::size_t>& columns)>;

// Greedy forward selection. Each round adds the remaining feature with the
// highest score (ties: earliest in `names`). Selection stops at the first
// round whose score is strictly below the previous round's; that round is
// recorded in the trace but not chosen.
inline SelectionTrace forward_select(const std::vector<std::string>& names, const SubsetEvaluator& evaluator,
                                     int jobs = 1) {
  SelectionTrace trace;
  std::vector<std::size_t> chosen_idx;
  std::vector<bool> used(names.size(), false);
  for (std::size_t round = 1; round <= names.size(); ++round) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < names.size(); ++i)
      if (!used[i]) candidates.push_back(i);
    std::vector<double> scores(candidates.size());
    try {
      parallel_for(candidates.size(), jobs, [&](std::size_t k) {
        auto subset = chosen_idx;
        subset.push_back(candidates[k]);
        scores[k] = evaluator(subset);
      });
    } catch (const NumericalError& e) {
      throw NumericalError("feature selection round " + std::to_string(round) + ": " + e.what());
    } catch (const std::exception& e) {
      throw DataError("feature selection round " + std::to_string(round) + ": " + e.what());
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < candidates.size(); ++k)
      if (scores[k] > scores[best]) best = k;
    const double score = scores[best];
    trace.steps.push_back({names[candidates[best]], score});
    if (round > 1 && score < trace.steps[round - 2].score) {
      trace.dipped = true;
      break;
    }
    used[candidates[best]] = true;
    chosen_idx.push_back(candidates[best]);
    trace.chosen.push_back(names[candidates[best]]);
  }
  return trace;
}

// sqrt rule for the per-split feature count of the selection forest.
inline int default_feature_subsample(std::size_t features) {
  return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(features)))));
}

// Validation AP of one forest trained on the training months. A
// feature_subsample of 0 in `config` selects the sqrt rule.
inline SubsetEvaluator forest_ap_evaluator(const FeatureMatrix& fm, const std::vector<int>& targets,
                                           const SplitSpec& split, ForestConfig config) {
  if (targets.size() != fm.rows()) throw DataError("targets do not match feature rows");
  auto train_rows = fm.rows_in(split.train);
  auto val_rows = fm.rows_in(split.validation);
  if (val_rows.empty()) throw DataError("validation range has no feature rows");
  if (train_rows.size() < 2) throw DataError("training range has fewer than two feature rows");
  std::vector<int> y_train, y_val;
  for (auto r : train_rows) y_train.push_back(targets[r]);
  for (auto r : val_rows) y_val.push_back(targets[r]);
  return [&fm, config, train_rows = std::move(train_rows), val_rows = std::move(val_rows),
          y_train = std::move(y_train), y_val = std::move(y_val)](const std::vector<std::size_t>& cols) {
    ForestConfig c = config;
    if (c.feature_subsample <= 0) c.feature_subsample = default_feature_subsample(cols.size());
    c.feature_subsample = std::min<int>(c.feature_subsample, static_cast<int>(cols.size()));
    const auto forest = train_forest(c, PresortedTable(fm.gather(train_rows, cols), y_train));
    const Eigen::VectorXd p = forest.predict(fm.gather(val_rows, cols));
    return average_precision(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), y_val);
  };
}

inline nlohmann::json to_json(const SelectionTrace& t) {
  nlohmann::json steps = nlohmann::json::array();
  for (std::size_t i = 0; i < t.steps.size(); ++i)
    steps.push_back({{"round", i + 1}, {"feature", t.steps[i].feature}, {"score", t.steps[i].score}});
  return {{"steps", steps}, {"chosen", t.chosen}, {"stopped_by", t.dipped ? "first_dip" : "exhausted"}};
}

inline SelectionTrace selection_from_json(const nlohmann::json& j) {
  try {
    SelectionTrace t;
    for (const auto& s : j.at("steps")) t.steps.push_back({s.at("feature").get<std::string>(), s.at("score").get<double>()});
    t.chosen = j.at("chosen").get<std::vector<std::string>>();
    t.dipped = j.at("stopped_by").get<std::string>() == "first_dip";
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed selection trace: ") + e.what());
  }
}

}  // namespace conflux
