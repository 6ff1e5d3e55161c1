#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "conflux/data_model.hpp"
#include "conflux/ensemble.hpp"
#include "conflux/error.hpp"
#include "conflux/exposure_spatial.hpp"
#include "conflux/exposure_temporal.hpp"
#include "conflux/features.hpp"
#include "conflux/synth.hpp"
#include "conflux/text.hpp"

namespace conflux {

// Everything a run needs. Defaults reproduce the replication setup; a config
// file only has to name what differs.
struct RunConfig {
  // paths
  std::string events;  // raw event CSV for `ingest`
  std::string splits;  // optional split file; overrides train/validation/test
  std::string out = "conflux_out";

  std::uint64_t seed = 1;
  int jobs = 1;
  int horizon = 36;
  SplitSpec split;

  // training subsets
  int min_conflict_months = 8;
  int conflict_window = 12;
  int sce_subset_size = 60;

  // MAP fitting
  int map_starts = 8;
  int map_max_iterations = 500;
  TwoTrendPriorSpec temporal_prior;
  SpatialPriorSpec spatial_prior;

  // feature selection
  bool selection = true;
  std::vector<std::string> features;  // used when selection = false
  int select_trees = 100;
  int select_max_depth = 8;
  int select_min_leaf = 5;
  int select_feature_subsample = 0;  // 0: floor(sqrt(candidate subset size))

  // ensemble
  int ensemble_size = 1000;
  JitterRanges jitter;

  std::optional<double> threshold;  // unset: calibrated on the last history month
  bool write_rasters = true;

  SynthConfig synth;
  std::optional<std::uint64_t> synth_seed;  // unset: `seed`

  void validate() const;
};

namespace detail {

struct ConfigKey {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
  bool hashed = true;  // part of the run fingerprint
};

template <class T>
T parse_config_number(std::string_view v) {
  T out{};
  if (!text::parse_number(v, out)) throw UsageError("expected a number, got '" + std::string(v) + "'");
  return out;
}

inline bool parse_config_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("expected true or false, got '" + std::string(v) + "'");
}

template <class T>
Range<T> parse_config_range(std::string_view v) {
  const auto dots = v.find("..");
  if (dots == std::string_view::npos) throw UsageError("expected MIN..MAX, got '" + std::string(v) + "'");
  return {parse_config_number<T>(v.substr(0, dots)), parse_config_number<T>(v.substr(dots + 2))};
}

inline std::string show(double v) { return text::format_double(v); }
inline std::string show(int v) { return std::to_string(v); }
inline std::string show(std::uint64_t v) { return std::to_string(v); }
inline std::string show(bool v) { return v ? "true" : "false"; }
inline std::string show(const std::string& v) { return v; }
template <class T>
std::string show(Range<T> r) {
  return show(r.min) + ".." + show(r.max);
}

template <class T>
ConfigKey number_key(std::string name, T RunConfig::*field) {
  return {std::move(name), [field](RunConfig& c, std::string_view v) { c.*field = parse_config_number<T>(v); },
          [field](const RunConfig& c) { return show(c.*field); }};
}

// Key bound to a member reached through an accessor, e.g. c.synth.rows.
template <class T, class Access>
ConfigKey nested_key(std::string name, Access access) {
  return {std::move(name),
          [access](RunConfig& c, std::string_view v) {
            if constexpr (std::is_same_v<T, bool>) access(c) = parse_config_bool(v);
            else access(c) = parse_config_number<T>(v);
          },
          [access](const RunConfig& c) { return show(access(const_cast<RunConfig&>(c))); }};
}

template <class T, class Access>
ConfigKey range_key(std::string name, Access access) {
  return {std::move(name), [access](RunConfig& c, std::string_view v) { access(c) = parse_config_range<T>(v); },
          [access](const RunConfig& c) { return show(access(const_cast<RunConfig&>(c))); }};
}

// Log-normal prior given by its median in natural units and the sd of the log.
inline std::vector<ConfigKey> prior_keys(std::string prefix, gp::LogNormalPrior& (*access)(RunConfig&)) {
  return {{prefix,
           [access](RunConfig& c, std::string_view v) {
             const double median = parse_config_number<double>(v);
             if (!(median > 0.0)) throw UsageError("prior median must be positive");
             access(c).log_mean = std::log(median);
           },
           [access](const RunConfig& c) { return show(std::exp(access(const_cast<RunConfig&>(c)).log_mean)); }},
          {prefix + "_sd",
           [access](RunConfig& c, std::string_view v) { access(c).log_sd = parse_config_number<double>(v); },
           [access](const RunConfig& c) { return show(access(const_cast<RunConfig&>(c)).log_sd); }}};
}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back({"events", [](RunConfig& c, std::string_view v) { c.events = std::string(v); },
                 [](const RunConfig& c) { return c.events; }});
    k.push_back({"splits", [](RunConfig& c, std::string_view v) { c.splits = std::string(v); },
                 [](const RunConfig& c) { return c.splits; }});
    k.push_back({"out", [](RunConfig& c, std::string_view v) { c.out = std::string(v); },
                 [](const RunConfig& c) { return c.out; }, false});
    k.push_back(number_key("seed", &RunConfig::seed));
    auto jobs = number_key("jobs", &RunConfig::jobs);
    jobs.hashed = false;
    k.push_back(jobs);
    k.push_back(number_key("horizon", &RunConfig::horizon));
    auto split_key = [](std::string name, MonthRange SplitSpec::*field) {
      return ConfigKey{name,
                       [field](RunConfig& c, std::string_view v) {
                         try {
                           c.split.*field = parse_month_range(v);
                         } catch (const DataError& e) {
                           throw UsageError(e.what());
                         }
                       },
                       [field](const RunConfig& c) { return format_month_range(c.split.*field); }};
    };
    k.push_back(split_key("train", &SplitSpec::train));
    k.push_back(split_key("validation", &SplitSpec::validation));
    k.push_back(split_key("test", &SplitSpec::test));

    k.push_back(number_key("min_conflict_months", &RunConfig::min_conflict_months));
    k.push_back(number_key("conflict_window", &RunConfig::conflict_window));
    k.push_back(number_key("sce_subset_size", &RunConfig::sce_subset_size));
    k.push_back(number_key("map_starts", &RunConfig::map_starts));
    k.push_back(number_key("map_max_iterations", &RunConfig::map_max_iterations));

    using P = gp::LogNormalPrior& (*)(RunConfig&);
    for (auto& key : prior_keys("prior_long_lengthscale", P([](RunConfig& c) -> gp::LogNormalPrior& {
                                  return c.temporal_prior.long_lengthscale;
                                })))
      k.push_back(key);
    for (auto& key : prior_keys("prior_short_lengthscale", P([](RunConfig& c) -> gp::LogNormalPrior& {
                                  return c.temporal_prior.short_lengthscale;
                                })))
      k.push_back(key);
    for (auto& key : prior_keys("prior_amplitude", P([](RunConfig& c) -> gp::LogNormalPrior& {
                                  return c.temporal_prior.amplitude;
                                })))
      k.push_back(key);
    for (auto& key :
         prior_keys("prior_noise", P([](RunConfig& c) -> gp::LogNormalPrior& { return c.temporal_prior.noise; })))
      k.push_back(key);
    for (auto& key : prior_keys("prior_spatial_lengthscale", P([](RunConfig& c) -> gp::LogNormalPrior& {
                                  return c.spatial_prior.lengthscale;
                                })))
      k.push_back(key);
    for (auto& key : prior_keys("prior_spatial_amplitude", P([](RunConfig& c) -> gp::LogNormalPrior& {
                                  return c.spatial_prior.amplitude;
                                })))
      k.push_back(key);
    for (auto& key : prior_keys("prior_spatial_noise", P([](RunConfig& c) -> gp::LogNormalPrior& {
                                  return c.spatial_prior.noise;
                                })))
      k.push_back(key);

    k.push_back(nested_key<bool>("selection", [](RunConfig& c) -> bool& { return c.selection; }));
    k.push_back({"features",
                 [](RunConfig& c, std::string_view v) {
                   c.features.clear();
                   for (auto f : text::split(v, ','))
                     if (!text::trim(f).empty()) c.features.emplace_back(text::trim(f));
                 },
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.features.size(); ++i) s += (i ? "," : "") + c.features[i];
                   return s;
                 }});
    k.push_back(number_key("select_trees", &RunConfig::select_trees));
    k.push_back(number_key("select_max_depth", &RunConfig::select_max_depth));
    k.push_back(number_key("select_min_leaf", &RunConfig::select_min_leaf));
    k.push_back(number_key("select_feature_subsample", &RunConfig::select_feature_subsample));
    k.push_back(number_key("ensemble_size", &RunConfig::ensemble_size));
    k.push_back(range_key<int>("jitter_tree_count", [](RunConfig& c) -> Range<int>& { return c.jitter.tree_count; }));
    k.push_back(range_key<int>("jitter_max_depth", [](RunConfig& c) -> Range<int>& { return c.jitter.max_depth; }));
    k.push_back(range_key<int>("jitter_min_leaf", [](RunConfig& c) -> Range<int>& { return c.jitter.min_leaf; }));
    k.push_back(range_key<int>("jitter_feature_subsample",
                               [](RunConfig& c) -> Range<int>& { return c.jitter.feature_subsample; }));
    k.push_back(range_key<double>("jitter_bootstrap",
                                  [](RunConfig& c) -> Range<double>& { return c.jitter.bootstrap_fraction; }));
    k.push_back({"threshold",
                 [](RunConfig& c, std::string_view v) {
                   if (v == "auto") c.threshold.reset();
                   else c.threshold = parse_config_number<double>(v);
                 },
                 [](const RunConfig& c) { return c.threshold ? show(*c.threshold) : std::string("auto"); }});
    k.push_back(nested_key<bool>("write_rasters", [](RunConfig& c) -> bool& { return c.write_rasters; }));

    k.push_back(nested_key<int>("synth_rows", [](RunConfig& c) -> int& { return c.synth.rows; }));
    k.push_back(nested_key<int>("synth_cols", [](RunConfig& c) -> int& { return c.synth.cols; }));
    k.push_back(nested_key<int>("synth_months", [](RunConfig& c) -> int& { return c.synth.months; }));
    auto synth_double = [&k](std::string name, double SynthConfig::*field) {
      k.push_back(nested_key<double>(std::move(name), [field](RunConfig& c) -> double& { return c.synth.*field; }));
    };
    synth_double("synth_cell_size", &SynthConfig::cell_size);
    synth_double("synth_origin_lat", &SynthConfig::origin_lat);
    synth_double("synth_origin_lon", &SynthConfig::origin_lon);
    synth_double("synth_lengthscale_long", &SynthConfig::lengthscale_long);
    synth_double("synth_amplitude_long", &SynthConfig::amplitude_long);
    synth_double("synth_lengthscale_short", &SynthConfig::lengthscale_short);
    synth_double("synth_amplitude_short", &SynthConfig::amplitude_short);
    synth_double("synth_noise", &SynthConfig::noise);
    synth_double("synth_spatial_lengthscale", &SynthConfig::spatial_lengthscale);
    synth_double("synth_spatial_amplitude", &SynthConfig::spatial_amplitude);
    synth_double("synth_spatial_noise", &SynthConfig::spatial_noise);
    synth_double("synth_link_scale", &SynthConfig::link_scale);
    synth_double("synth_baseline", &SynthConfig::baseline);
    k.push_back({"synth_seed",
                 [](RunConfig& c, std::string_view v) {
                   if (v == "auto") c.synth_seed.reset();
                   else c.synth_seed = parse_config_number<std::uint64_t>(v);
                 },
                 [](const RunConfig& c) { return c.synth_seed ? show(*c.synth_seed) : std::string("auto"); }});
    return k;
  }();
  return keys;
}

inline const ConfigKey* find_config_key(std::string_view name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

}  // namespace detail

inline void RunConfig::validate() const {
  split.validate();
  if (jobs < 1) throw UsageError("jobs must be >= 1");
  if (horizon < 1) throw UsageError("horizon must be >= 1");
  if (min_conflict_months < 1 || conflict_window < min_conflict_months)
    throw UsageError("need 1 <= min_conflict_months <= conflict_window");
  if (sce_subset_size < 1) throw UsageError("sce_subset_size must be >= 1");
  if (map_starts < 1 || map_max_iterations < 1) throw UsageError("map_starts and map_max_iterations must be >= 1");
  if (select_trees < 1 || select_max_depth < 1 || select_min_leaf < 1 || select_feature_subsample < 0)
    throw UsageError("selection forest settings out of range");
  if (!selection && features.empty()) throw UsageError("selection = false requires a features list");
  for (const auto& f : features) {
    bool known = false;
    for (auto n : kFeatureNames) known = known || n == f;
    if (!known) throw UsageError("unknown feature '" + f + "'");
  }
  if (ensemble_size < 1) throw UsageError("ensemble_size must be >= 1");
  try {
    jitter.validate();
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  if (jitter.tree_count.min < 1 || jitter.max_depth.min < 1 || jitter.min_leaf.min < 1 ||
      jitter.feature_subsample.min < 1 || !(jitter.bootstrap_fraction.min > 0.0) ||
      jitter.bootstrap_fraction.max > 1.0)
    throw UsageError("jitter ranges out of bounds");
  for (const auto* p : {&temporal_prior.long_lengthscale, &temporal_prior.short_lengthscale, &temporal_prior.amplitude,
                        &temporal_prior.noise, &spatial_prior.lengthscale, &spatial_prior.amplitude,
                        &spatial_prior.noise})
    if (!(p->log_sd > 0.0)) throw UsageError("prior sd must be positive");
}

// Applies one `key = value` assignment.
inline void set_config_value(RunConfig& c, std::string_view key, std::string_view value) {
  const auto* k = detail::find_config_key(key);
  if (!k) throw UsageError("unknown key '" + std::string(key) + "'");
  k->set(c, text::trim(value));
}

// Line-oriented `key = value` text; '#' starts a comment line. Split files
// named by `splits` are resolved relative to the working directory.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    try {
      if (eq == std::string_view::npos) throw UsageError("expected key = value");
      set_config_value(base, text::trim(body.substr(0, eq)), body.substr(eq + 1));
    } catch (const Error& e) {
      throw UsageError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  try {
    return parse_config(in, std::move(base));
  } catch (const UsageError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

// Every key with its resolved value, one `key = value` line each, in a fixed
// order. Parsing the dump reproduces the config.
inline std::string dump_config(const RunConfig& c, bool hashed_only = false) {
  std::string s;
  for (const auto& k : detail::config_keys())
    if (!hashed_only || k.hashed) s += k.name + " = " + k.get(c) + '\n';
  return s;
}

// Fingerprint of everything that affects results (not `out` or `jobs`).
inline std::string config_hash(const RunConfig& c) { return text::hex64(text::fnv1a(dump_config(c, true))); }

}  // namespace conflux
