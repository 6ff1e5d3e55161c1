#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "conflux/config.hpp"
#include "conflux/data_model.hpp"
#include "conflux/ensemble.hpp"
#include "conflux/evaluation.hpp"
#include "conflux/exposure_spatial.hpp"
#include "conflux/exposure_temporal.hpp"
#include "conflux/features.hpp"
#include "conflux/gp/serialize.hpp"
#include "conflux/selection.hpp"
#include "conflux/synth.hpp"

namespace conflux {

namespace fs = std::filesystem;

// Seed streams derived from the master seed, one per randomized stage.
enum SeedStream : std::uint64_t { kSeedTce = 1, kSeedSce = 2, kSeedTsce = 3, kSeedSelect = 4, kSeedEnsemble = 5 };

struct Stage {
  const char* name;
  const char* dir;
  const char* summary;
};

inline constexpr Stage kStages[] = {
    {"ingest", "ingest", "validate the event CSV and store it in the run directory"},
    {"synth", "synth", "generate a synthetic event set with known latent truth"},
    {"fit-tce", "tce", "fit temporal exposure hyperparameters and extrapolate trend surfaces"},
    {"fit-sce", "sce", "fit the spatial exposure model and estimate monthly surfaces"},
    {"fit-tsce", "tsce", "fit and extrapolate temporal trends of spatial exposure"},
    {"features", "features", "derive the 24 exposure features"},
    {"select", "select", "forward feature selection on the validation months"},
    {"train", "train", "train the jittered forest ensemble"},
    {"forecast", "forecast", "predict conflict probabilities for the test months"},
    {"evaluate", "evaluate", "score forecasts against the observed test months"},
};

inline constexpr std::string_view kPredictionHeader = "cell_id,month_index,probability,spread_p05,spread_p95";

class Pipeline {
 public:
  Pipeline(RunConfig config, std::ostream& log) : cfg_(std::move(config)), log_(log), out_(cfg_.out) {
    cfg_.validate();
    hash_ = config_hash(cfg_);
  }

  const RunConfig& config() const { return cfg_; }
  const std::string& hash() const { return hash_; }
  fs::path artifact(std::string_view stage_dir, std::string_view file) const { return out_ / stage_dir / file; }

  void run(std::string_view stage) {
    if (stage == "ingest") ingest();
    else if (stage == "synth") synth();
    else if (stage == "fit-tce") fit_tce_stage();
    else if (stage == "fit-sce") fit_sce_stage();
    else if (stage == "fit-tsce") fit_tsce_stage();
    else if (stage == "features") features();
    else if (stage == "select") select();
    else if (stage == "train") train();
    else if (stage == "forecast") forecast();
    else if (stage == "evaluate") evaluate_stage();
    else if (stage == "pipeline") all();
    else throw UsageError("unknown stage '" + std::string(stage) + "'");
  }

  // Every stage in order; synthetic data when no event file is configured.
  void all() {
    if (cfg_.events.empty()) synth();
    else ingest();
    fit_tce_stage();
    fit_sce_stage();
    fit_tsce_stage();
    features();
    select();
    train();
    forecast();
    evaluate_stage();
  }

  void ingest() {
    if (cfg_.events.empty()) throw UsageError("ingest needs `events = PATH` in the config");
    const auto data = ingest_events(cfg_.events, cfg_.split.window());
    if (data.records.empty()) throw DataError("event file '" + cfg_.events + "' has no records");
    begin("ingest");
    write_file("ingest", "events.csv", [&](std::ostream& o) { write_events(o, data); });
    write_file("ingest", "splits.txt", [&](std::ostream& o) { write_split_spec(o, cfg_.split); });
    log_ << "ingest: " << data.records.size() << " records over " << data.cells.size() << " cells\n";
    finish("ingest", {});
  }

  void synth() {
    SynthConfig sc = cfg_.synth;
    sc.seed = cfg_.synth_seed.value_or(cfg_.seed);
    if (sc.months < cfg_.split.test.last + 1)
      throw UsageError("synth_months = " + std::to_string(sc.months) + " does not cover the test range ending at " +
                       std::to_string(cfg_.split.test.last));
    const auto d = generate(sc);
    EventData events{{}, d.events.cells};
    for (const auto& r : d.events.records)
      if (cfg_.split.window().contains(r.month_index)) events.records.push_back(r);
    begin("synth");
    begin("ingest");
    write_file("synth", "truth.csv", [&](std::ostream& o) { write_truth(o, d); });
    write_file("synth", "config.json", [&](std::ostream& o) { o << to_json(sc).dump(2) << '\n'; });
    write_file("ingest", "events.csv", [&](std::ostream& o) { write_events(o, events); });
    write_file("ingest", "splits.txt", [&](std::ostream& o) { write_split_spec(o, cfg_.split); });
    std::size_t positives = 0;
    for (const auto& r : events.records) positives += static_cast<std::size_t>(r.target);
    log_ << "synth: " << events.cells.size() << " cells x " << sc.months << " months, event share "
         << static_cast<double>(positives) / static_cast<double>(events.records.size()) << '\n';
    finish("synth", {{"synth", sc.seed}});
    finish("ingest", {});
  }

  void fit_tce_stage() {
    const auto events = load_events("fit-tce");
    const auto timelines = history_timelines(events);
    const auto subset = training_subset(timelines);
    log_ << "fit-tce: " << subset.size() << " training timelines of " << timelines.size() << '\n';
    const auto fit = fit_tce(subset, cfg_.temporal_prior, map_options(kSeedTce));
    log_fit("fit-tce", fit);
    begin("tce");
    write_file("tce", "model.json", [&](std::ostream& o) { o << gp::to_json(fit).dump(2) << '\n'; });
    write_trend_phases("tce", timelines, fit.model);
    finish("fit-tce", {{"map", derive_seed(cfg_.seed, kSeedTce)}});
  }

  void fit_sce_stage() {
    const auto events = load_events("fit-sce");
    const auto timelines = history_timelines(events);
    const auto fit = fit_sce(timelines, events.cells, cfg_.split.train, cfg_.sce_subset_size, cfg_.spatial_prior,
                             map_options(kSeedSce));
    log_fit("fit-sce", fit);
    const auto surfaces =
        estimate_sce(timelines, events.cells, cfg_.split.history(), fit.model, cfg_.sce_subset_size, cfg_.jobs);
    begin("sce");
    write_file("sce", "model.json", [&](std::ostream& o) { o << gp::to_json(fit).dump(2) << '\n'; });
    write_file("sce", "surfaces.csv", [&](std::ostream& o) { write_spatial_surfaces(o, surfaces); });
    if (cfg_.write_rasters)
      write_file("sce", "raster_month_" + padded(surfaces.back().month_index) + ".csv",
                 [&](std::ostream& o) { write_surface_raster(o, surfaces.back(), events.cells); });
    finish("fit-sce", {{"map", derive_seed(cfg_.seed, kSeedSce)}});
  }

  void fit_tsce_stage() {
    const auto events = load_events("fit-tsce");
    const auto magnitude = history_timelines(events);
    const auto surfaces = read_artifact("sce", "surfaces.csv", "fit-sce",
                                        [](std::istream& in) { return read_spatial_surfaces(in); });
    const auto sce = sce_timelines(surfaces);
    if (sce.empty() || sce.front().months.size() != static_cast<std::size_t>(cfg_.split.history().size()))
      throw DataError("sce/surfaces.csv does not cover the history months; rerun fit-sce");
    const auto fit = fit_tsce(sce, magnitude, cfg_.split.train, cfg_.min_conflict_months, cfg_.conflict_window,
                              cfg_.temporal_prior, map_options(kSeedTsce));
    log_fit("fit-tsce", fit);
    begin("tsce");
    write_file("tsce", "model.json", [&](std::ostream& o) { o << gp::to_json(fit).dump(2) << '\n'; });
    write_trend_phases("tsce", sce, fit.model);
    finish("fit-tsce", {{"map", derive_seed(cfg_.seed, kSeedTsce)}});
  }

  void features() {
    begin("features");
    for (const char* phase : {"validation", "test"}) {
      const std::string file = std::string("surfaces_") + phase + ".csv";
      const auto tce = read_artifact("tce", file, "fit-tce", [](std::istream& in) { return read_trend_surfaces(in); });
      const auto tsce =
          read_artifact("tsce", file, "fit-tsce", [](std::istream& in) { return read_trend_surfaces(in); });
      const auto fm = assemble_features(tce, tsce);
      write_file("features", std::string(phase) + ".csv", [&](std::ostream& o) { write_features(o, fm); });
      log_ << "features: " << phase << " matrix " << fm.rows() << " x " << fm.names.size() << '\n';
    }
    finish("features", {});
  }

  void select() {
    const auto events = load_events("select");
    const auto fm = read_artifact("features", "validation.csv", "features",
                                  [](std::istream& in) { return read_features(in); });
    nlohmann::json j;
    if (cfg_.selection) {
      const auto y = align_targets(fm, events.records);
      ForestConfig fc;
      fc.tree_count = cfg_.select_trees;
      fc.max_depth = cfg_.select_max_depth;
      fc.min_leaf = cfg_.select_min_leaf;
      fc.feature_subsample = cfg_.select_feature_subsample;
      fc.seed = derive_seed(cfg_.seed, kSeedSelect);
      const auto trace = forward_select(fm.names, forest_ap_evaluator(fm, y, cfg_.split, fc), cfg_.jobs);
      for (std::size_t i = 0; i < trace.steps.size(); ++i)
        log_ << "select: round " << i + 1 << " + " << trace.steps[i].feature << " AP "
             << text::format_double(trace.steps[i].score) << '\n';
      j = to_json(trace);
    } else {
      j = to_json(SelectionTrace{{}, cfg_.features, false});
      j["stopped_by"] = "configured";
    }
    begin("select");
    write_file("select", "trace.json", [&](std::ostream& o) { o << j.dump(2) << '\n'; });
    finish("select", {{"forest", derive_seed(cfg_.seed, kSeedSelect)}});
  }

  void train() {
    const auto events = load_events("train");
    const auto fm = read_artifact("features", "test.csv", "features", [](std::istream& in) { return read_features(in); });
    const auto chosen = read_artifact("select", "trace.json", "select", [](std::istream& in) {
                          return selection_from_json(parse_json(in, "selection trace"));
                        }).chosen;
    std::vector<std::size_t> cols;
    for (const auto& name : chosen) cols.push_back(fm.column_index(name));
    const auto rows = fm.rows_in(cfg_.split.history());
    const auto all_y = align_targets(fm, events.records);
    std::vector<int> y;
    for (auto r : rows) y.push_back(all_y[r]);
    log_ << "train: " << cfg_.ensemble_size << " forests on " << rows.size() << " rows, features";
    for (const auto& n : chosen) log_ << ' ' << n;
    log_ << '\n';
    const auto e = train_ensemble(fm.gather(rows, cols), y, chosen, cfg_.ensemble_size,
                                  derive_seed(cfg_.seed, kSeedEnsemble), cfg_.jitter, {}, cfg_.jobs);
    begin("train");
    write_file("train", "ensemble.json", [&](std::ostream& o) { o << to_json(e).dump() << '\n'; });
    finish("train", {{"ensemble", derive_seed(cfg_.seed, kSeedEnsemble)}});
  }

  void forecast() {
    const auto fm = read_artifact("features", "test.csv", "features", [](std::istream& in) { return read_features(in); });
    const auto e = read_artifact("train", "ensemble.json", "train",
                                 [](std::istream& in) { return ensemble_from_json(parse_json(in, "ensemble file")); });
    std::vector<std::size_t> cols;
    for (const auto& name : e.feature_names) cols.push_back(fm.column_index(name));
    const auto rows = fm.rows_in(cfg_.split.test);
    if (rows.empty()) throw DataError("feature matrix has no rows in the test months; is the horizon too short?");
    const auto p = predict(e, fm.gather(rows, cols), cfg_.jobs);
    begin("forecast");
    write_file("forecast", "predictions.csv", [&](std::ostream& o) {
      o << kPredictionHeader << '\n';
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        o << fm.cell_ids[rows[i]] << ',' << fm.months[rows[i]] << ',' << text::format_double(p.mean[r]) << ','
          << text::format_double(row_quantile(p.per_model, r, 0.05)) << ','
          << text::format_double(row_quantile(p.per_model, r, 0.95)) << '\n';
      }
    });
    log_ << "forecast: " << rows.size() << " cell-months\n";
    finish("forecast", {});
  }

  void evaluate_stage() {
    const auto events = load_events("evaluate");
    auto rows = read_artifact("forecast", "predictions.csv", "forecast",
                              [](std::istream& in) { return read_predictions(in); });
    std::map<std::pair<CellId, int>, int> labels;
    for (const auto& r : events.records) labels[{r.cell_id, r.month_index}] = r.target;
    for (std::size_t i = 0; i < rows.scores.size(); ++i) {
      auto it = labels.find({rows.cell_ids[i], rows.months[i]});
      rows.labels.push_back(it == labels.end() ? 0 : it->second);
    }
    const auto [lo, hi] = std::minmax_element(rows.months.begin(), rows.months.end());
    const MonthRange months{*lo, *hi};

    double threshold = 0.0;
    std::string rule = "configured";
    if (cfg_.threshold) {
      threshold = *cfg_.threshold;
    } else {
      rule = "calibrated";
      const int last = cfg_.split.history().last;
      std::size_t observed = 0;
      for (const auto& r : events.records) observed += r.month_index == last ? static_cast<std::size_t>(r.target) : 0;
      std::vector<double> first;
      for (std::size_t i = 0; i < rows.scores.size(); ++i)
        if (rows.months[i] == months.first) first.push_back(rows.scores[i]);
      threshold = calibrate_threshold(first, observed);
    }
    const auto report = evaluate(rows, months, threshold);
    auto j = to_json(report);
    j["threshold_rule"] = rule;
    j["months"] = format_month_range(months);
    begin("evaluate");
    write_file("evaluate", "report.json", [&](std::ostream& o) { o << j.dump(2) << '\n'; });
    write_file("evaluate", "pr_curve.csv", [&](std::ostream& o) { write_curve(o, "recall,precision", report.pr_points); });
    write_file("evaluate", "roc_curve.csv", [&](std::ostream& o) { write_curve(o, "fpr,tpr", report.roc_points); });
    write_file("evaluate", "per_month.csv", [&](std::ostream& o) { write_month_metrics(o, report.per_month); });
    if (cfg_.write_rasters) {
      fs::create_directories(out_ / "evaluate" / "confusion");
      const auto layout = raster_layout(events.cells);
      for (const auto& [m, grid] : report.confusion)
        write_file("evaluate", "confusion/month_" + padded(m) + ".csv", [&](std::ostream& o) {
          write_raster(o, layout, [&](CellId id) {
            auto it = grid.find(id);
            return it == grid.end() ? std::string() : std::string(outcome_name(it->second));
          });
        });
    }
    log_ << "evaluate: AP " << text::format_double(report.ap) << ", AUC " << text::format_double(report.auc)
         << ", base rate " << text::format_double(report.base_rate) << ", threshold "
         << text::format_double(threshold) << " (" << rule << ")\n";
    finish("evaluate", {});
  }

  static ScoredRows read_predictions(std::istream& in) {
    ScoredRows rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto body = text::trim(line);
      if (body.empty()) continue;
      if (line_no == 1) {
        if (body != kPredictionHeader)
          throw DataError("predictions file: unexpected header");
        continue;
      }
      const auto f = text::split(body, ',');
      CellId c = 0;
      int m = 0;
      double p = 0.0;
      if (f.size() != 5 || !text::parse_number(f[0], c) || !text::parse_number(f[1], m) ||
          !text::parse_number(f[2], p))
        throw DataError("predictions file line " + std::to_string(line_no) + ": malformed row");
      rows.cell_ids.push_back(c);
      rows.months.push_back(m);
      rows.scores.push_back(p);
    }
    if (rows.scores.empty()) throw DataError("predictions file has no rows");
    return rows;
  }

 private:
  RunConfig cfg_;
  std::ostream& log_;
  fs::path out_;
  std::string hash_;
  std::map<std::string, std::map<std::string, std::string>> written_;  // stage dir -> file -> hash

  static std::string padded(int month) {
    std::string s = std::to_string(month);
    return std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
  }

  static nlohmann::json parse_json(std::istream& in, const std::string& what) {
    try {
      nlohmann::json j;
      in >> j;
      return j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed " + what + ": " + e.what());
    }
  }

  static std::string stage_dir(std::string_view stage) {
    for (const auto& s : kStages)
      if (stage == s.name) return s.dir;
    return std::string(stage);
  }

  void begin(const std::string& dir) {
    fs::create_directories(out_ / dir);
    written_[dir].clear();
  }

  template <class Writer>
  void write_file(const std::string& dir, const std::string& file, Writer&& writer) {
    const auto path = out_ / dir / file;
    std::ostringstream buf;
    writer(buf);
    const std::string bytes = buf.str();
    std::ofstream o(path, std::ios::binary);
    if (!o) throw DataError("cannot write '" + path.string() + "'");
    o << bytes;
    if (!o) throw DataError("failed writing '" + path.string() + "'");
    written_[dir][file] = text::hex64(text::fnv1a(bytes));
  }

  template <class Reader>
  std::invoke_result_t<Reader, std::istream&> read_artifact(const std::string& dir, const std::string& file, std::string_view producer, Reader&& reader) const {
    const auto path = out_ / dir / file;
    std::ifstream in(path, std::ios::binary);
    if (!in)
      throw DataError("missing artifact '" + path.string() + "'; run `conflux " + std::string(producer) + "` first");
    try {
      return reader(in);
    } catch (const DataError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }

  EventData load_events(std::string_view) const {
    return read_artifact("ingest", "events.csv", cfg_.events.empty() ? "synth` or `conflux ingest" : "ingest",
                         [&](std::istream& in) { return parse_events(in, cfg_.split.window()); });
  }

  std::vector<Timeline> history_timelines(const EventData& events) const {
    std::vector<CellMonthRecord> history;
    for (const auto& r : events.records)
      if (cfg_.split.history().contains(r.month_index)) history.push_back(r);
    return build_timelines(history, events.cells, cfg_.split.history());
  }

  std::vector<Timeline> training_subset(const std::vector<Timeline>& timelines) const {
    std::vector<Timeline> train;
    for (const auto& t : timelines) train.push_back(slice(t, cfg_.split.train));
    return select_training_timelines(train, cfg_.min_conflict_months, cfg_.conflict_window);
  }

  gp::MapOptions map_options(SeedStream stream) const {
    gp::MapOptions o;
    o.starts = cfg_.map_starts;
    o.seed = derive_seed(cfg_.seed, stream);
    o.lbfgs.max_iterations = cfg_.map_max_iterations;
    o.jobs = cfg_.jobs;
    return o;
  }

  void log_fit(std::string_view stage, const gp::MapFit& fit) const {
    log_ << stage << ':';
    for (const auto& c : fit.model.components)
      log_ << ' ' << gp::kernel_name(c.kind) << "(l=" << text::format_double(c.lengthscale)
           << ", eta=" << text::format_double(c.amplitude) << ')';
    log_ << " eps=" << text::format_double(fit.model.noise) << ", best start " << fit.best_start << '\n';
  }

  // Validation phase conditions on the training months and extrapolates over
  // the validation months; the test phase conditions on all history months.
  void write_trend_phases(const std::string& dir, const std::vector<Timeline>& history, const gp::GPModel& model) {
    std::vector<Timeline> train;
    for (const auto& t : history) train.push_back(slice(t, cfg_.split.train));
    const auto val = extrapolate_all(train, model, cfg_.split.validation.size(), cfg_.jobs);
    write_file(dir, "surfaces_validation.csv", [&](std::ostream& o) { write_trend_surfaces(o, val); });
    const auto test = extrapolate_all(history, model, cfg_.horizon, cfg_.jobs);
    write_file(dir, "surfaces_test.csv", [&](std::ostream& o) { write_trend_surfaces(o, test); });
  }

  nlohmann::json config_json() const {
    nlohmann::json c = nlohmann::json::object();
    for (const auto& k : detail::config_keys())
      if (k.hashed) c[k.name] = k.get(cfg_);
    return c;
  }

  // Writes <dir>/manifest.json and merges the stage into <out>/manifest.json.
  void finish(const std::string& stage, const std::map<std::string, std::uint64_t>& seeds) {
    const auto dir = stage_dir(stage);
    nlohmann::json artifacts = nlohmann::json::object();
    for (const auto& [file, h] : written_[dir]) artifacts[dir + "/" + file] = h;
    nlohmann::json entry = {{"stage", stage}, {"config_hash", hash_}, {"seed", cfg_.seed}, {"artifacts", artifacts}};
    nlohmann::json s = nlohmann::json::object();
    for (const auto& [k, v] : seeds) s[k] = v;
    entry["seeds"] = s;
    {
      std::ofstream o(out_ / dir / "manifest.json", std::ios::binary);
      o << entry.dump(2) << '\n';
    }

    const auto top = out_ / "manifest.json";
    nlohmann::json m;
    if (std::ifstream in(top); in) {
      try {
        in >> m;
      } catch (const nlohmann::json::exception&) {
        m = nlohmann::json();
      }
    }
    if (!m.is_object() || m.value("config_hash", "") != hash_)
      m = {{"config_hash", hash_}, {"config", config_json()}, {"stages", nlohmann::json::object()}};
    m["stages"][stage] = entry;
    std::ofstream o(top, std::ios::binary);
    o << m.dump(2) << '\n';
  }
};

}  // namespace conflux
