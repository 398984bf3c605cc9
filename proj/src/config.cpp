#include "flowplug/config.hpp"

#include <fstream>
#include <set>

#include "flowplug/errors.hpp"

namespace flowplug {

using nlohmann::json;

namespace {

class Reader {
 public:
  Reader(const json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }

  const json* section(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + context_ + "." + k + "'");
  }

 private:
  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

std::string probe_input_name(ProbeInput p) { return p == ProbeInput::Flatten ? "flatten" : "mean_code"; }

ProbeInput probe_input_from(const std::string& s) {
  if (s == "mean_code") return ProbeInput::MeanCode;
  if (s == "flatten") return ProbeInput::Flatten;
  throw ConfigError("probe.input must be 'mean_code' or 'flatten', got '" + s + "'");
}

}  // namespace

json to_json(const SyntheticConfig& c) {
  return {{"num_identities", c.num_identities},
          {"frames_per_identity", c.frames_per_identity},
          {"num_attributes", c.num_attributes},
          {"continuous_attributes", c.continuous_attributes},
          {"dim", c.dim},
          {"num_layers", c.num_layers},
          {"identity_dim", c.identity_dim},
          {"label_noise", c.label_noise},
          {"leaky_slope", c.leaky_slope}};
}

SyntheticConfig synthetic_config_from_json(const json& j) {
  SyntheticConfig c;
  Reader r(j, "data");
  r.get("num_identities", c.num_identities);
  r.get("frames_per_identity", c.frames_per_identity);
  r.get("num_attributes", c.num_attributes);
  r.get("continuous_attributes", c.continuous_attributes);
  r.get("dim", c.dim);
  r.get("num_layers", c.num_layers);
  r.get("identity_dim", c.identity_dim);
  r.get("label_noise", c.label_noise);
  r.get("leaky_slope", c.leaky_slope);
  r.finish();
  c.validate();
  return c;
}

json to_json(const FlowConfig& c) {
  return {{"dim", c.dim},
          {"num_conditions", c.num_conditions},
          {"num_couplings", c.num_couplings},
          {"hidden_width", c.hidden_width},
          {"hidden_layers", c.hidden_layers},
          {"scale_clamp", c.scale_clamp}};
}

FlowConfig flow_config_from_json(const json& j) {
  FlowConfig c;
  Reader r(j, "flow");
  r.get("dim", c.dim);
  r.get("num_conditions", c.num_conditions);
  r.get("num_couplings", c.num_couplings);
  r.get("hidden_width", c.hidden_width);
  r.get("hidden_layers", c.hidden_layers);
  r.get("scale_clamp", c.scale_clamp);
  r.finish();
  return c;
}

json to_json(const PriorConfig& c) {
  return {{"num_attributes", c.num_attributes}, {"dim", c.dim}, {"sigma", c.sigma}};
}

PriorConfig prior_config_from_json(const json& j) {
  PriorConfig c;
  Reader r(j, "prior");
  r.get("num_attributes", c.num_attributes);
  r.get("dim", c.dim);
  r.get("sigma", c.sigma);
  r.finish();
  return c;
}

json to_json(const LossConfig& c) {
  return {{"lambda_contrastive", c.lambda_contrastive},
          {"normalize_groups", c.normalize_groups},
          {"prior", to_json(c.prior)}};
}

LossConfig loss_config_from_json(const json& j) {
  LossConfig c;
  Reader r(j, "loss");
  r.get("lambda_contrastive", c.lambda_contrastive);
  r.get("normalize_groups", c.normalize_groups);
  if (const json* p = r.section("prior")) c.prior = prior_config_from_json(*p);
  r.finish();
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_groups", c.batch_groups},
          {"frames_per_group", c.frames_per_group},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"holdout_fraction", c.holdout_fraction},
          {"loss", to_json(c.loss)}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  Reader r(j, "train");
  r.get("epochs", c.epochs);
  r.get("batch_groups", c.batch_groups);
  r.get("frames_per_group", c.frames_per_group);
  r.get("lr", c.adam.lr);
  r.get("beta1", c.adam.beta1);
  r.get("beta2", c.adam.beta2);
  r.get("eps", c.adam.eps);
  r.get("seed", c.seed);
  r.get("eval_every", c.eval_every);
  r.get("holdout_fraction", c.holdout_fraction);
  if (const json* l = r.section("loss")) c.loss = loss_config_from_json(*l);
  r.finish();
  return c;
}

json to_json(const ProbeConfig& c) {
  return {{"hidden_width", c.hidden_width}, {"epochs", c.epochs},
          {"batch_size", c.batch_size},     {"lr", c.lr},
          {"input", probe_input_name(c.input)}, {"seed", c.seed}};
}

ProbeConfig probe_config_from_json(const json& j) {
  ProbeConfig c;
  Reader r(j, "probe");
  r.get("hidden_width", c.hidden_width);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("lr", c.lr);
  std::string input = probe_input_name(c.input);
  r.get("input", input);
  c.input = probe_input_from(input);
  r.get("seed", c.seed);
  r.finish();
  return c;
}

json to_json(const MinimalEditParams& c) {
  return {{"tau", c.tau}, {"delta", c.delta}, {"max_steps", c.max_steps}};
}

MinimalEditParams edit_params_from_json(const json& j) {
  MinimalEditParams c;
  Reader r(j, "edit");
  r.get("tau", c.tau);
  r.get("delta", c.delta);
  r.get("max_steps", c.max_steps);
  r.finish();
  return c;
}

json to_json(const EvalConfig& c) {
  return {{"edit", to_json(c.edit)},
          {"probe", to_json(c.probe)},
          {"max_eval_stacks", c.max_eval_stacks},
          {"holdout_fraction", c.holdout_fraction}};
}

EvalConfig eval_config_from_json(const json& j) {
  EvalConfig c;
  Reader r(j, "eval");
  if (const json* e = r.section("edit")) c.edit = edit_params_from_json(*e);
  if (const json* p = r.section("probe")) c.probe = probe_config_from_json(*p);
  r.get("max_eval_stacks", c.max_eval_stacks);
  r.get("holdout_fraction", c.holdout_fraction);
  r.finish();
  return c;
}

// ---- RunConfig ------------------------------------------------------------------

void RunConfig::finalize() {
  data.validate();
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw ConfigError("holdout_fraction must be in (0, 1)");
  flow.dim = data.dim;
  flow.num_conditions = data.num_layers;
  flow.validate();
  train.seed = seed;
  train.holdout_fraction = holdout_fraction;
  train.loss.prior = {data.num_attributes, data.dim, sigma};
  train.validate();
  probe.seed = seed;
  probe.validate();
  edit.validate();
  if (max_eval_stacks < 2) throw ConfigError("eval.max_eval_stacks must be at least 2");
}

EvalConfig RunConfig::eval_config() const {
  return {edit, probe, max_eval_stacks, holdout_fraction};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Reader r(j, "config");
  r.get("seed", c.seed);
  std::string out = c.out_dir.string();
  r.get("out", out);
  c.out_dir = out;
  r.get("holdout_fraction", c.holdout_fraction);
  if (const json* s = r.section("data")) c.data = synthetic_config_from_json(*s);
  if (const json* s = r.section("flow")) {
    Reader fr(*s, "flow");
    fr.get("num_couplings", c.flow.num_couplings);
    fr.get("hidden_width", c.flow.hidden_width);
    fr.get("hidden_layers", c.flow.hidden_layers);
    fr.get("scale_clamp", c.flow.scale_clamp);
    fr.finish();
  }
  if (const json* s = r.section("train")) {
    Reader tr(*s, "train");
    tr.get("epochs", c.train.epochs);
    tr.get("batch_groups", c.train.batch_groups);
    tr.get("frames_per_group", c.train.frames_per_group);
    tr.get("lr", c.train.adam.lr);
    tr.get("beta1", c.train.adam.beta1);
    tr.get("beta2", c.train.adam.beta2);
    tr.get("eps", c.train.adam.eps);
    tr.get("eval_every", c.train.eval_every);
    tr.finish();
  }
  if (const json* s = r.section("loss")) {
    Reader lr(*s, "loss");
    lr.get("lambda_contrastive", c.train.loss.lambda_contrastive);
    lr.get("normalize_groups", c.train.loss.normalize_groups);
    lr.get("sigma", c.sigma);
    lr.finish();
  }
  if (const json* s = r.section("probe")) {
    Reader pr(*s, "probe");
    pr.get("hidden_width", c.probe.hidden_width);
    pr.get("epochs", c.probe.epochs);
    pr.get("batch_size", c.probe.batch_size);
    pr.get("lr", c.probe.lr);
    std::string input = c.probe.input == ProbeInput::Flatten ? "flatten" : "mean_code";
    pr.get("input", input);
    c.probe.input = probe_input_from(input);
    pr.finish();
  }
  if (const json* s = r.section("edit")) c.edit = edit_params_from_json(*s);
  if (const json* s = r.section("eval")) {
    Reader er(*s, "eval");
    er.get("max_eval_stacks", c.max_eval_stacks);
    er.finish();
  }
  r.finish();
  return c;
}

json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"out", c.out_dir.string()},
          {"holdout_fraction", c.holdout_fraction},
          {"data", to_json(c.data)},
          {"flow",
           {{"num_couplings", c.flow.num_couplings},
            {"hidden_width", c.flow.hidden_width},
            {"hidden_layers", c.flow.hidden_layers},
            {"scale_clamp", c.flow.scale_clamp}}},
          {"train",
           {{"epochs", c.train.epochs},
            {"batch_groups", c.train.batch_groups},
            {"frames_per_group", c.train.frames_per_group},
            {"lr", c.train.adam.lr},
            {"beta1", c.train.adam.beta1},
            {"beta2", c.train.adam.beta2},
            {"eps", c.train.adam.eps},
            {"eval_every", c.train.eval_every}}},
          {"loss",
           {{"lambda_contrastive", c.train.loss.lambda_contrastive},
            {"normalize_groups", c.train.loss.normalize_groups},
            {"sigma", c.sigma}}},
          {"probe",
           {{"hidden_width", c.probe.hidden_width},
            {"epochs", c.probe.epochs},
            {"batch_size", c.probe.batch_size},
            {"lr", c.probe.lr},
            {"input", probe_input_name(c.probe.input)}}},
          {"edit", to_json(c.edit)},
          {"eval", {{"max_eval_stacks", c.max_eval_stacks}}}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace flowplug
