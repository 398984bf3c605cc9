#pragma once

// The gen-data / train / edit / evaluate steps shared by the CLI and the
// integration tests. Each step writes only under cfg.out_dir and drops a
// config snapshot next to its outputs.

#include <filesystem>
#include <ostream>
#include <vector>

#include "flowplug/config.hpp"
#include "flowplug/evaluation.hpp"
#include "flowplug/training.hpp"

namespace flowplug {

struct RunPaths {
  std::filesystem::path dataset;
  std::filesystem::path truth;
  std::filesystem::path checkpoint;
  std::filesystem::path loss_csv;
  std::filesystem::path report_dir;
  std::filesystem::path edited;
};

RunPaths run_paths(const std::filesystem::path& out_dir);

void write_config_snapshot(const RunConfig& cfg, const std::string& step);

SyntheticDataset run_gen_data(const RunConfig& cfg);
TrainResult run_train(const RunConfig& cfg, const std::filesystem::path& dataset,
                      std::ostream* log = nullptr);
// One step of an edit spec. Absolute sets the attribute coordinate to
// `target`; Minimal walks it in `direction` until the probe accepts.
struct EditStep {
  std::size_t attr_index = 0;
  bool minimal = false;
  double target = 1.0;
  int direction = 1;
};

// Edit spec file: {"edits": [{"attribute": 0, "mode": "absolute", "target": 1.0},
//                            {"attribute": 1, "mode": "minimal", "direction": -1}],
//                  "stacks": "eval" | "all"}
struct EditSpec {
  std::vector<EditStep> steps;
  bool all_stacks = false;
};

inline constexpr const char* kEditedFormat = "flowplug-edited-v1";

EditSpec edit_spec_from_json(const nlohmann::json& j);
EditSpec load_edit_spec(const std::filesystem::path& path);

// Applies every step of the spec, in order, to each selected stack and
// writes the results as JSONL. Returns the number of stacks written.
std::size_t run_edit(const RunConfig& cfg, const std::filesystem::path& dataset,
                     const std::filesystem::path& checkpoint, const EditSpec& spec);

EvalReport run_evaluate(const RunConfig& cfg, const std::filesystem::path& dataset,
                        const std::filesystem::path& checkpoint);

}  // namespace flowplug
