#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conflux/data_model.hpp"
#include "conflux/error.hpp"
#include "conflux/text.hpp"

namespace conflux {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 1.0;  // 1.0 when nothing is predicted positive
  double recall = 0.0;
  bool no_predicted_positives = false;
};

namespace detail {

inline void check_scored(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  if (scores.empty()) throw DataError("no scores to evaluate");
  for (int l : labels)
    if (l != 0 && l != 1) throw DataError("labels must be 0 or 1");
}

// Indices ordered by descending score; equal scores stay in index order.
inline std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace detail

// score >= threshold counts as a predicted positive.
inline ConfusionCounts precision_recall(std::span<const double> scores, std::span<const int> labels, double threshold) {
  detail::check_scored(scores, labels);
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i]) ++c.tp;
    else if (pred) ++c.fp;
    else if (labels[i]) ++c.fn;
    else ++c.tn;
  }
  c.no_predicted_positives = c.tp + c.fp == 0;
  c.precision = c.no_predicted_positives ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  c.recall = c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return c;
}

// (recall, precision) at each descending distinct score threshold.
inline std::vector<std::pair<double, double>> pr_curve(std::span<const double> scores, std::span<const int> labels) {
  detail::check_scored(scores, labels);
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0) throw UndefinedMetricError("precision-recall curve needs at least one positive label");
  const auto idx = detail::descending_order(scores);
  std::vector<std::pair<double, double>> pts;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    labels[idx[k]] ? ++tp : ++fp;
    if (k + 1 < idx.size() && scores[idx[k + 1]] == scores[idx[k]]) continue;
    pts.emplace_back(static_cast<double>(tp) / static_cast<double>(positives),
                     static_cast<double>(tp) / static_cast<double>(tp + fp));
  }
  return pts;
}

// AP = sum_n (R_n - R_{n-1}) P_n over descending distinct thresholds.
inline double average_precision(std::span<const double> scores, std::span<const int> labels) {
  double ap = 0.0, prev_recall = 0.0;
  for (const auto& [r, p] : pr_curve(scores, labels)) {
    ap += (r - prev_recall) * p;
    prev_recall = r;
  }
  return ap;
}

struct RocResult {
  std::vector<std::pair<double, double>> points;  // (fp_rate, tp_rate), from (0,0)
  double auc = 0.0;
};

// AUC as the fraction of positive/negative pairs ranked correctly, ties 1/2.
inline RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  detail::check_scored(scores, labels);
  const auto P = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const auto N = labels.size() - P;
  if (P == 0 || N == 0) throw UndefinedMetricError("ROC AUC needs both classes");

  const auto idx = detail::descending_order(scores);
  RocResult res;
  res.points.emplace_back(0.0, 0.0);
  // Pairs won: each negative contributes the positives strictly above it
  // plus half of the positives tied with it.
  double won = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < idx.size();) {
    std::size_t g_pos = 0, g_neg = 0, j = k;
    while (j < idx.size() && scores[idx[j]] == scores[idx[k]]) {
      labels[idx[j]] ? ++g_pos : ++g_neg;
      ++j;
    }
    won += static_cast<double>(g_neg) * (static_cast<double>(tp) + 0.5 * static_cast<double>(g_pos));
    tp += g_pos;
    fp += g_neg;
    res.points.emplace_back(static_cast<double>(fp) / static_cast<double>(N), static_cast<double>(tp) / static_cast<double>(P));
    k = j;
  }
  res.auc = won / (static_cast<double>(P) * static_cast<double>(N));
  return res;
}

// Threshold that predicts about as many positives as `target_count`: take the
// lowest distinct prediction u_j with count(p >= u_j) <= target_count, then
// step down one rank to the next distinct value. Returns 0 when target_count
// covers every prediction; when even the highest value overshoots, returns
// that value.
inline double calibrate_threshold(std::span<const double> predictions, std::size_t target_count) {
  if (predictions.empty()) throw DataError("no predictions to calibrate on");
  if (target_count >= predictions.size()) return 0.0;
  std::vector<double> sorted(predictions.begin(), predictions.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  std::size_t j = 0;  // index into sorted of the first element of the current distinct value
  std::optional<std::size_t> last_fit;
  while (j < sorted.size()) {
    std::size_t end = j;
    while (end < sorted.size() && sorted[end] == sorted[j]) ++end;
    if (end > target_count) break;  // count(p >= sorted[j]) == end
    last_fit = j;
    j = end;
  }
  if (!last_fit) return sorted.front();
  return j < sorted.size() ? sorted[j] : sorted[*last_fit];
}

enum class Outcome { TP, FP, TN, FN };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::TP: return "TP";
    case Outcome::FP: return "FP";
    case Outcome::TN: return "TN";
    case Outcome::FN: return "FN";
  }
  return "?";
}

inline Outcome classify(double score, int label, double threshold) {
  const bool pred = score >= threshold;
  if (pred) return label ? Outcome::TP : Outcome::FP;
  return label ? Outcome::FN : Outcome::TN;
}

// Scored cell-months, parallel arrays.
struct ScoredRows {
  std::vector<CellId> cell_ids;
  std::vector<int> months;
  std::vector<double> scores;
  std::vector<int> labels;
};

using ConfusionMap = std::map<int, std::map<CellId, Outcome>>;

// Per-month outcome of every cell in `cells` for the requested months.
inline ConfusionMap confusion_map(const ScoredRows& rows, const std::vector<CellId>& cells, double threshold,
                                  const std::vector<int>& months) {
  std::map<std::pair<int, CellId>, std::size_t> at;
  for (std::size_t i = 0; i < rows.scores.size(); ++i) at[{rows.months[i], rows.cell_ids[i]}] = i;
  ConfusionMap out;
  for (int m : months) {
    auto& grid = out[m];
    for (CellId c : cells) {
      auto it = at.find({m, c});
      if (it == at.end())
        throw DataError("no prediction for cell " + std::to_string(c) + " in month " + std::to_string(m));
      grid[c] = classify(rows.scores[it->second], rows.labels[it->second], threshold);
    }
  }
  return out;
}

struct MonthMetrics {
  int month = 0;
  std::size_t rows = 0;
  std::size_t positives = 0;
  std::optional<double> ap;
  std::optional<double> auc;
  std::string skipped;  // reason, empty when both metrics exist
};

// AP and AUC within each month independently; degenerate months are kept
// with a skip reason instead of NaN.
inline std::vector<MonthMetrics> per_month_metrics(const ScoredRows& rows, MonthRange months) {
  std::vector<MonthMetrics> out;
  for (int m = months.first; m <= months.last; ++m) {
    std::vector<double> s;
    std::vector<int> l;
    for (std::size_t i = 0; i < rows.scores.size(); ++i)
      if (rows.months[i] == m) {
        s.push_back(rows.scores[i]);
        l.push_back(rows.labels[i]);
      }
    MonthMetrics mm;
    mm.month = m;
    mm.rows = s.size();
    mm.positives = static_cast<std::size_t>(std::count(l.begin(), l.end(), 1));
    if (s.empty()) {
      mm.skipped = "no rows";
    } else if (mm.positives == 0) {
      mm.skipped = "no positives";
    } else {
      mm.ap = average_precision(s, l);
      if (mm.positives == s.size()) mm.skipped = "no negatives";
      else mm.auc = roc_auc(s, l).auc;
    }
    out.push_back(std::move(mm));
  }
  return out;
}

struct EvaluationReport {
  double ap = 0.0;
  double auc = 0.0;
  double base_rate = 0.0;
  double threshold = 0.0;
  ConfusionCounts at_threshold;
  std::vector<std::pair<double, double>> pr_points;
  std::vector<std::pair<double, double>> roc_points;
  std::vector<MonthMetrics> per_month;
  ConfusionMap confusion;
};

inline EvaluationReport evaluate(const ScoredRows& rows, MonthRange months, double threshold) {
  EvaluationReport r;
  r.pr_points = pr_curve(rows.scores, rows.labels);
  r.ap = average_precision(rows.scores, rows.labels);
  const auto roc = roc_auc(rows.scores, rows.labels);
  r.auc = roc.auc;
  r.roc_points = roc.points;
  r.base_rate = static_cast<double>(std::count(rows.labels.begin(), rows.labels.end(), 1)) /
                static_cast<double>(rows.labels.size());
  r.threshold = threshold;
  r.at_threshold = precision_recall(rows.scores, rows.labels, threshold);
  r.per_month = per_month_metrics(rows, months);
  std::vector<CellId> cells = rows.cell_ids;
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  std::vector<int> ms;
  for (int m = months.first; m <= months.last; ++m) ms.push_back(m);
  r.confusion = confusion_map(rows, cells, threshold, ms);
  return r;
}

inline nlohmann::json to_json(const EvaluationReport& r) {
  using nlohmann::json;
  json months = json::array();
  for (const auto& m : r.per_month) {
    json e = {{"month_index", m.month}, {"rows", m.rows}, {"positives", m.positives}};
    e["ap"] = m.ap ? json(*m.ap) : json(nullptr);
    e["auc"] = m.auc ? json(*m.auc) : json(nullptr);
    if (!m.skipped.empty()) e["skipped"] = m.skipped;
    months.push_back(e);
  }
  const auto& c = r.at_threshold;
  return {{"ap", r.ap},
          {"auc", r.auc},
          {"base_rate", r.base_rate},
          {"threshold", r.threshold},
          {"at_threshold",
           {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}, {"precision", c.precision}, {"recall", c.recall},
            {"no_predicted_positives", c.no_predicted_positives}}},
          {"per_month", months}};
}

inline void write_curve(std::ostream& out, std::string_view header,
                        const std::vector<std::pair<double, double>>& pts) {
  out << header << '\n';
  for (const auto& [x, y] : pts) out << text::format_double(x) << ',' << text::format_double(y) << '\n';
}

inline void write_month_metrics(std::ostream& out, const std::vector<MonthMetrics>& months) {
  out << "month_index,rows,positives,ap,auc,skipped\n";
  for (const auto& m : months)
    out << m.month << ',' << m.rows << ',' << m.positives << ',' << (m.ap ? text::format_double(*m.ap) : "") << ','
        << (m.auc ? text::format_double(*m.auc) : "") << ',' << m.skipped << '\n';
}

}  // namespace conflux
