// Run configuration: defaults, JSON round-trip and validation.
#pragma once

#include "mdgmix/common.hpp"

#include <nlohmann/json.hpp>

#include <concepts>
#include <filesystem>
#include <fstream>
#include <set>

namespace mdgmix {

struct RunConfig {
  std::uint64_t seed = 0;
  int pca_dim = 50;
  bool pca_standardize = false;
  bool pca_center_output = false;
  int hidden = 256;
  int hops = 1;
  int n_pairs = 10;
  double rho = 0.3;
  double gamma = 0.5;
  std::string lambda_mode = "fixed";  // "fixed" or "beta"
  double lambda = 0.5;                // used when lambda_mode = fixed
  double lambda_alpha = 0.2;          // Beta(alpha, alpha) when lambda_mode = beta
  double grl_beta = 1.0;
  double lr_pre = 1e-4;
  double lr_down = 1e-3;
  double weight_decay = 1e-4;
  int epochs_pre = 100;
  int steps_adapt = 200;
  double tau = 1.0;
  int shots = 1;
  int repeats = 100;
  std::string mode = "node";              // "node" or "graph"
  std::string pair_selection = "boundary";  // "boundary" or "random"
  double kappa = 0.25;
  double delta_conf = 0.05;
  int threads = 1;

  bool operator==(const RunConfig&) const = default;
};

/// Calls f(name, field) for every field, in serialization order.
template <class Config, class F>
  requires std::same_as<std::remove_const_t<Config>, RunConfig>
void visit_fields(Config& c, F&& f) {
  f("seed", c.seed);
  f("pca_dim", c.pca_dim);
  f("pca_standardize", c.pca_standardize);
  f("pca_center_output", c.pca_center_output);
  f("hidden", c.hidden);
  f("hops", c.hops);
  f("n_pairs", c.n_pairs);
  f("rho", c.rho);
  f("gamma", c.gamma);
  f("lambda_mode", c.lambda_mode);
  f("lambda", c.lambda);
  f("lambda_alpha", c.lambda_alpha);
  f("grl_beta", c.grl_beta);
  f("lr_pre", c.lr_pre);
  f("lr_down", c.lr_down);
  f("weight_decay", c.weight_decay);
  f("epochs_pre", c.epochs_pre);
  f("steps_adapt", c.steps_adapt);
  f("tau", c.tau);
  f("shots", c.shots);
  f("repeats", c.repeats);
  f("mode", c.mode);
  f("pair_selection", c.pair_selection);
  f("kappa", c.kappa);
  f("delta_conf", c.delta_conf);
  f("threads", c.threads);
}

namespace detail {

/// Object -> struct via visit_fields; missing keys keep their defaults, unknown keys are errors.
template <class T>
T fields_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_object()) throw ValidationError(what + ": expected a JSON object");
  T out;
  std::set<std::string> known;
  visit_fields(out, [&](const char* name, auto& field) {
    known.insert(name);
    if (!j.contains(name)) return;
    try {
      j.at(name).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(what + ": field \"" + std::string(name) + "\" has the wrong type");
    }
  });
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ValidationError(what + ": unknown key \"" + key + "\"");
  return out;
}

template <class T>
nlohmann::ordered_json fields_to_json(const T& value) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  T copy = value;
  visit_fields(copy, [&](const char* name, const auto& field) { j[name] = field; });
  return j;
}

}  // namespace detail

/// Throws ValidationError naming the first offending field.
inline void validate(const RunConfig& c) {
  auto fail = [](const std::string& field, const std::string& rule) {
    throw ValidationError("config: " + field + " " + rule);
  };
  if (!(c.rho > 0.0 && c.rho < 1.0)) fail("rho", "must lie in (0,1)");
  if (!(c.gamma >= 0.0 && c.gamma < 1.0)) fail("gamma", "must lie in [0,1)");
  if (!(c.tau > 0.0)) fail("tau", "must be > 0");
  if (!(c.lr_pre > 0.0)) fail("lr_pre", "must be > 0");
  if (!(c.lr_down > 0.0)) fail("lr_down", "must be > 0");
  if (!(c.weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
  if (c.pca_dim < 1) fail("pca_dim", "must be >= 1");
  if (c.hidden < 1) fail("hidden", "must be >= 1");
  if (c.hops < 1) fail("hops", "must be >= 1");
  if (c.n_pairs < 1) fail("n_pairs", "must be >= 1");
  if (c.epochs_pre < 0) fail("epochs_pre", "must be >= 0");
  if (c.steps_adapt < 0) fail("steps_adapt", "must be >= 0");
  if (c.shots < 1) fail("shots", "must be >= 1");
  if (c.repeats < 1) fail("repeats", "must be >= 1");
  if (c.threads < 1) fail("threads", "must be >= 1");
  if (c.lambda_mode != "fixed" && c.lambda_mode != "beta") fail("lambda_mode", "must be \"fixed\" or \"beta\"");
  if (!(c.lambda >= 0.0 && c.lambda <= 1.0)) fail("lambda", "must lie in [0,1]");
  if (!(c.lambda_alpha > 0.0)) fail("lambda_alpha", "must be > 0");
  if (!(c.grl_beta >= 0.0)) fail("grl_beta", "must be >= 0");
  if (c.mode != "node" && c.mode != "graph") fail("mode", "must be \"node\" or \"graph\"");
  if (c.pair_selection != "boundary" && c.pair_selection != "random")
    fail("pair_selection", "must be \"boundary\" or \"random\"");
  if (!(c.kappa >= 0.0 && c.kappa <= 0.25)) fail("kappa", "must lie in [0,0.25]");
  if (!(c.delta_conf > 0.0 && c.delta_conf < 1.0)) fail("delta_conf", "must lie in (0,1)");
}

inline nlohmann::ordered_json config_to_json(const RunConfig& c) { return detail::fields_to_json(c); }

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c = detail::fields_from_json<RunConfig>(j, "config");
  validate(c);
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  return config_from_json(j);
}

}  // namespace mdgmix
