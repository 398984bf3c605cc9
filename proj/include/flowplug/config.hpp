#pragma once

// JSON conversion for every configuration struct, plus the RunConfig that
// drives the CLI. Readers are strict: unknown keys are a ConfigError so that
// typos never silently fall back to defaults.

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "flowplug/evaluation.hpp"
#include "flowplug/flow.hpp"
#include "flowplug/losses.hpp"
#include "flowplug/probe.hpp"
#include "flowplug/synthetic.hpp"
#include "flowplug/training.hpp"

namespace flowplug {

nlohmann::json to_json(const SyntheticConfig& c);
nlohmann::json to_json(const FlowConfig& c);
nlohmann::json to_json(const PriorConfig& c);
nlohmann::json to_json(const LossConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const ProbeConfig& c);
nlohmann::json to_json(const MinimalEditParams& c);
nlohmann::json to_json(const EvalConfig& c);

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);
FlowConfig flow_config_from_json(const nlohmann::json& j);
PriorConfig prior_config_from_json(const nlohmann::json& j);
LossConfig loss_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
ProbeConfig probe_config_from_json(const nlohmann::json& j);
MinimalEditParams edit_params_from_json(const nlohmann::json& j);
EvalConfig eval_config_from_json(const nlohmann::json& j);

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "run";
  double holdout_fraction = 0.2;
  double sigma = 0.5;
  SyntheticConfig data;
  FlowConfig flow;
  TrainConfig train;
  ProbeConfig probe;
  MinimalEditParams edit;
  std::size_t max_eval_stacks = 200;

  // Propagates shared values (seed, dimensions, sigma, holdout) into the
  // per-module configs and validates everything.
  void finalize();

  EvalConfig eval_config() const;
};

// Sections: seed, out, holdout_fraction, data, flow, train, loss, probe, edit,
// eval. Missing keys keep their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace flowplug
