#include "flowplug/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "flowplug/editing.hpp"
#include "flowplug/errors.hpp"

namespace flowplug {

RunPaths run_paths(const std::filesystem::path& out_dir) {
  return {out_dir / "dataset.jsonl", out_dir / "truth.jsonl",   out_dir / "checkpoint.json",
          out_dir / "loss.csv",      out_dir / "report",        out_dir / "edited.jsonl"};
}

void write_config_snapshot(const RunConfig& cfg, const std::string& step) {
  std::filesystem::create_directories(cfg.out_dir);
  const auto path = cfg.out_dir / ("config." + step + ".json");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(cfg).dump(2) << '\n';
}

SyntheticDataset run_gen_data(const RunConfig& cfg) {
  const auto paths = run_paths(cfg.out_dir);
  SyntheticDataset ds = generate_dataset(cfg.data, cfg.seed);
  write_config_snapshot(cfg, "gen-data");
  save_dataset(ds, paths.dataset);
  save_truth(ds, paths.truth);
  return ds;
}

TrainResult run_train(const RunConfig& cfg, const std::filesystem::path& dataset, std::ostream* log) {
  const auto paths = run_paths(cfg.out_dir);
  const SyntheticDataset ds = load_dataset(dataset);
  if (ds.config.dim != cfg.data.dim || ds.config.num_layers != cfg.data.num_layers ||
      ds.config.num_attributes != cfg.data.num_attributes)
    throw ConfigError("dataset " + dataset.string() + " does not match the configured dimensions");
  EpochCallback cb;
  if (log) {
    cb = [log](const TraceRow& r) {
      *log << "epoch " << r.epoch << " nll " << r.mean_nll << " contrastive " << r.mean_contrastive
           << " total " << r.total << '\n';
    };
  }
  TrainResult res = train(ds, cfg.flow, cfg.train, cb);
  write_config_snapshot(cfg, "train");
  save_checkpoint(res.checkpoint, paths.checkpoint);
  write_trace_csv(res.trace, paths.loss_csv);
  return res;
}

EditSpec edit_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("edit spec must be a JSON object");
  EditSpec spec;
  for (const auto& [key, value] : j.items()) {
    if (key == "stacks") {
      const auto sel = value.get<std::string>();
      if (sel != "eval" && sel != "all") throw ConfigError("edit spec: stacks must be \"eval\" or \"all\"");
      spec.all_stacks = sel == "all";
    } else if (key != "edits") {
      throw ConfigError("edit spec: unknown key \"" + key + "\"");
    }
  }
  if (!j.contains("edits") || !j["edits"].is_array() || j["edits"].empty())
    throw ConfigError("edit spec: \"edits\" must be a non-empty array");
  for (const auto& e : j["edits"]) {
    EditStep step;
    std::string mode = "absolute";
    for (const auto& [key, value] : e.items()) {
      if (key == "attribute") step.attr_index = value.get<std::size_t>();
      else if (key == "mode") mode = value.get<std::string>();
      else if (key == "target") step.target = value.get<double>();
      else if (key == "direction") step.direction = value.get<int>();
      else throw ConfigError("edit spec: unknown key \"" + key + "\" in edit");
    }
    if (!e.contains("attribute")) throw ConfigError("edit spec: edit without \"attribute\"");
    if (mode == "minimal") {
      step.minimal = true;
      if (step.direction != 1 && step.direction != -1)
        throw ConfigError("edit spec: direction must be +1 or -1");
    } else if (mode != "absolute") {
      throw ConfigError("edit spec: mode must be \"absolute\" or \"minimal\"");
    }
    if (!std::isfinite(step.target)) throw ConfigError("edit spec: target must be finite");
    spec.steps.push_back(step);
  }
  return spec;
}

EditSpec load_edit_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open edit spec " + path.string());
  try {
    return edit_spec_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

namespace {

void check_compatible(const Checkpoint& ck, const SyntheticDataset& ds,
                      const std::filesystem::path& checkpoint, const std::filesystem::path& dataset) {
  if (ck.model.dim() != ds.config.dim || ck.model.num_conditions() != ds.config.num_layers ||
      ck.model.prior.num_attributes != ds.config.num_attributes)
    throw ShapeError("checkpoint " + checkpoint.string() + " does not match dataset " +
                     dataset.string());
}

}  // namespace

std::size_t run_edit(const RunConfig& cfg, const std::filesystem::path& dataset,
                     const std::filesystem::path& checkpoint, const EditSpec& spec) {
  const auto paths = run_paths(cfg.out_dir);
  const SyntheticDataset ds = load_dataset(dataset);
  const Checkpoint ck = load_checkpoint(checkpoint);
  check_compatible(ck, ds, checkpoint, dataset);
  for (const auto& step : spec.steps)
    if (step.attr_index >= ds.config.num_attributes)
      throw ConfigError("edit spec: attribute " + std::to_string(step.attr_index) + " out of range");

  const EvalConfig ec = cfg.eval_config();
  std::vector<StyleStack> stacks;
  if (spec.all_stacks) {
    stacks = ds.stacks;
  } else {
    EvalConfig all = ec;
    all.max_eval_stacks = ds.stacks.size();
    stacks = select_eval_stacks(ds, all);
  }

  const bool needs_probe =
      std::any_of(spec.steps.begin(), spec.steps.end(), [](const EditStep& s) { return s.minimal; });
  ProbeModel probe;
  if (needs_probe) probe = train_probe(select_train_stacks(ds, ec), select_eval_stacks(ds, ec), ec.probe);

  std::vector<nlohmann::json> log(stacks.size(), nlohmann::json::array());
  for (const auto& step : spec.steps) {
    if (step.minimal) {
      const std::vector<int> dirs(stacks.size(), step.direction);
      auto res = minimal_edit_batch(ck.model, stacks, step.attr_index, dirs, probe, ec.edit);
      for (std::size_t i = 0; i < stacks.size(); ++i) {
        log[i].push_back({{"attribute", step.attr_index},
                          {"mode", "minimal"},
                          {"direction", step.direction},
                          {"steps", res[i].steps},
                          {"converged", res[i].converged}});
        stacks[i] = std::move(res[i].stack);
      }
    } else {
      const EditRequest req{step.attr_index, step.target, EditMode::Absolute};
      for (std::size_t i = 0; i < stacks.size(); ++i) {
        stacks[i] = edit_attribute(ck.model, stacks[i], req);
        log[i].push_back({{"attribute", step.attr_index}, {"mode", "absolute"}, {"target", step.target}});
      }
    }
  }

  write_config_snapshot(cfg, "edit");
  std::ofstream out(paths.edited, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + paths.edited.string());
  out << nlohmann::json{{"format", kEditedFormat},
                        {"dataset_fingerprint", dataset_fingerprint(ds)},
                        {"checkpoint_dataset_fingerprint", ck.dataset_fingerprint},
                        {"num_records", stacks.size()}}
             .dump()
      << '\n';
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    out << nlohmann::json{{"identity_id", stacks[i].identity_id},
                          {"frame_id", stacks[i].frame_id},
                          {"labels", stacks[i].labels},
                          {"codes", stacks[i].codes},
                          {"edits", log[i]}}
               .dump()
        << '\n';
  }
  return stacks.size();
}

EvalReport run_evaluate(const RunConfig& cfg, const std::filesystem::path& dataset,
                        const std::filesystem::path& checkpoint) {
  const auto paths = run_paths(cfg.out_dir);
  const SyntheticDataset ds = load_dataset(dataset);
  const Checkpoint ck = load_checkpoint(checkpoint);
  check_compatible(ck, ds, checkpoint, dataset);
  const EvalConfig ec = cfg.eval_config();
  const auto train_stacks = select_train_stacks(ds, ec);
  const auto eval_stacks = select_eval_stacks(ds, ec);
  const ProbeModel probe = train_probe(train_stacks, eval_stacks, ec.probe);
  EvalReport rep = evaluate_model(ck.model, probe, ds.backbone(), ds.config, eval_stacks, ec.edit);

  // The output location is left out so reruns elsewhere produce identical reports.
  nlohmann::json config = to_json(cfg);
  config.erase("out");
  nlohmann::json run{{"config", config},
                     {"dataset_seed", ds.seed},
                     {"dataset_fingerprint", dataset_fingerprint(ds)},
                     {"checkpoint_dataset_fingerprint", ck.dataset_fingerprint},
                     {"checkpoint_final_loss", ck.final_loss},
                     {"checkpoint_lambda", ck.train.loss.lambda_contrastive}};
  write_config_snapshot(cfg, "evaluate");
  write_report(rep, paths.report_dir, run.dump());
  return rep;
}

}  // namespace flowplug
