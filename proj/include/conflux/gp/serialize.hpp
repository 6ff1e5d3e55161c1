#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "conflux/error.hpp"
#include "conflux/gp/map_estimate.hpp"

namespace conflux::gp {

using nlohmann::json;

inline json to_json(const GPModel& m) {
  json comps = json::array();
  for (const auto& c : m.components)
    comps.push_back({{"kind", std::string(kernel_name(c.kind))},
                     {"lengthscale", c.lengthscale},
                     {"amplitude", c.amplitude}});
  return {{"components", comps}, {"noise", m.noise}};
}

inline GPModel model_from_json(const json& j) {
  try {
    GPModel m;
    for (const auto& c : j.at("components"))
      m.components.push_back({parse_kernel_kind(c.at("kind").get<std::string>()),
                              c.at("lengthscale").get<double>(), c.at("amplitude").get<double>()});
    m.noise = j.at("noise").get<double>();
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed GP model JSON: ") + e.what());
  }
}

inline json to_json(const LogNormalPrior& p) { return {{"log_mean", p.log_mean}, {"log_sd", p.log_sd}}; }

inline json to_json(const HyperPrior& p) {
  json ls = json::array(), amp = json::array();
  for (const auto& x : p.lengthscale) ls.push_back(to_json(x));
  for (const auto& x : p.amplitude) amp.push_back(to_json(x));
  return {{"lengthscale", ls}, {"amplitude", amp}, {"noise", to_json(p.noise)}};
}

inline json to_json(const MapFit& fit) {
  json starts = json::array();
  for (const auto& s : fit.starts)
    starts.push_back({{"iterations", s.iterations},
                      {"stop_reason", std::string(stop_reason_name(s.reason))},
                      {"converged", s.converged},
                      {"log_posterior", s.log_posterior}});
  json j = to_json(fit.model);
  j["prior"] = to_json(fit.prior);
  j["optimizer"] = {{"method", "L-BFGS multi-start"},
                    {"starts", fit.starts.size()},
                    {"best_start", fit.best_start},
                    {"iterations", fit.total_iterations()},
                    {"final_lml", fit.lml},
                    {"final_log_posterior", fit.log_posterior},
                    {"start_reports", starts}};
  return j;
}

inline void save_fit(const std::string& path, const MapFit& fit) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << to_json(fit).dump(2) << '\n';
}

inline GPModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed model file '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

}  // namespace conflux::gp
