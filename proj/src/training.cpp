#include "flowplug/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "flowplug/config.hpp"
#include "flowplug/errors.hpp"

namespace flowplug {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1 || batch_groups < 1 || frames_per_group < 1)
    throw ConfigError("train: epochs, batch_groups and frames_per_group must be positive");
  if (!(adam.lr >= 0.0)) throw ConfigError("train: lr must be non-negative");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("train: adam betas must be in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("train: adam eps must be positive");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
    throw ConfigError("train: holdout_fraction must be in [0, 1)");
  loss.validate();
}

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::vector<Batch> make_batches(const std::vector<StyleStack>& stacks,
                                std::span<const std::size_t> subset, const TrainConfig& cfg,
                                std::size_t epoch) {
  if (subset.empty()) throw ConfigError("make_batches: no frames to train on");
  std::mt19937_64 rng(mix(cfg.seed, 1000 + epoch));
  std::vector<std::vector<std::size_t>> groups;
  for (auto frames : identity_index_groups(stacks, subset)) {
    std::shuffle(frames.begin(), frames.end(), rng);
    for (std::size_t i = 0; i < frames.size(); i += cfg.frames_per_group) {
      const std::size_t end = std::min(frames.size(), i + cfg.frames_per_group);
      groups.emplace_back(frames.begin() + static_cast<std::ptrdiff_t>(i),
                          frames.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  std::shuffle(groups.begin(), groups.end(), rng);
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < groups.size(); i += cfg.batch_groups) {
    const std::size_t end = std::min(groups.size(), i + cfg.batch_groups);
    batches.emplace_back(groups.begin() + static_cast<std::ptrdiff_t>(i),
                         groups.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<Batch> make_batches(const SyntheticDataset& ds, const TrainConfig& cfg,
                                std::size_t epoch) {
  std::vector<std::size_t> all(ds.stacks.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_batches(ds.stacks, all, cfg, epoch);
}

std::vector<IdentityGroup> resolve_batch(const std::vector<StyleStack>& stacks, const Batch& batch) {
  std::vector<IdentityGroup> out;
  out.reserve(batch.size());
  for (const auto& g : batch) {
    IdentityGroup ig;
    ig.identity_id = stacks.at(g.front()).identity_id;
    for (std::size_t idx : g) ig.frames.push_back(&stacks.at(idx));
    out.push_back(std::move(ig));
  }
  return out;
}

namespace {

struct EpochSums {
  double nll = 0.0;
  double contrastive = 0.0;
  std::size_t stacks = 0;
  std::size_t terms = 0;

  void add(const LossBreakdown& lb) {
    nll += lb.sum_nll;
    contrastive += lb.sum_contrastive;
    stacks += lb.num_stacks;
    terms += lb.num_contrastive_terms;
  }

  TraceRow row(std::size_t epoch, double lambda) const {
    TraceRow r;
    r.epoch = epoch;
    r.mean_nll = nll / static_cast<double>(stacks);
    r.mean_contrastive = contrastive / static_cast<double>(terms);
    r.total = r.mean_nll + lambda * r.mean_contrastive;
    return r;
  }
};

std::string where(std::size_t epoch, std::size_t batch) {
  return "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch);
}

}  // namespace

TrainResult train(const SyntheticDataset& ds, std::span<const std::size_t> subset,
                  const FlowConfig& flow_cfg, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (flow_cfg.dim != ds.config.dim || flow_cfg.num_conditions != ds.config.num_layers)
    throw ConfigError("train: flow config does not match the dataset dimensions");
  if (cfg.loss.prior.dim != ds.config.dim ||
      cfg.loss.prior.num_attributes != ds.config.num_attributes)
    throw ConfigError("train: prior config does not match the dataset dimensions");

  TrainResult result;
  FlowModel model = make_flow(flow_cfg, cfg.loss.prior, mix(cfg.seed, 1));
  std::vector<double> params = flatten_params(model);
  AdamState adam(params.size());
  const double lambda = cfg.loss.lambda_contrastive;

  {
    EpochSums sums;
    const auto batches = make_batches(ds.stacks, subset, cfg, 0);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto groups = resolve_batch(ds.stacks, batches[b]);
      try {
        sums.add(total_loss(model, groups, cfg.loss));
      } catch (const NumericError& e) {
        throw DivergenceError(std::string("non-finite loss at ") + where(0, b) + ": " + e.what());
      }
    }
    result.trace.push_back(sums.row(0, lambda));
    if (on_epoch) on_epoch(result.trace.back());
  }

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochSums sums;
    const auto batches = make_batches(ds.stacks, subset, cfg, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto groups = resolve_batch(ds.stacks, batches[b]);
      FlowModel grad = model.zeros_like();
      LossBreakdown lb;
      try {
        lb = total_loss_and_gradient(model, groups, cfg.loss, grad);
        const auto g = flatten_params(grad);
        adam_step(params, g, adam, cfg.adam);
      } catch (const NumericError& e) {
        throw DivergenceError(std::string("training diverged at ") + where(epoch, b) + ": " +
                              e.what());
      }
      assign_params(model, params);
      sums.add(lb);
    }
    result.trace.push_back(sums.row(epoch, lambda));
    if (on_epoch && cfg.eval_every > 0 && epoch % cfg.eval_every == 0) on_epoch(result.trace.back());
  }

  result.checkpoint.model = std::move(model);
  result.checkpoint.train = cfg;
  result.checkpoint.epoch = cfg.epochs;
  result.checkpoint.final_loss = result.trace.back().total;
  result.checkpoint.dataset_fingerprint = dataset_fingerprint(ds);
  return result;
}

TrainResult train(const SyntheticDataset& ds, const FlowConfig& flow_cfg, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  const auto split = split_by_identity(ds, cfg.holdout_fraction);
  return train(ds, split.train, flow_cfg, cfg, on_epoch);
}

// ---- checkpoint I/O ------------------------------------------------------------

namespace {

json mlp_to_json(const MlpParams& p) {
  json layers = json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"in", l.in_dim()},
                      {"out", l.out_dim()},
                      {"activation", to_string(l.activation)},
                      {"weight", std::vector<double>(l.weight.values().begin(), l.weight.values().end())},
                      {"bias", l.bias}});
  }
  return {{"layers", layers}};
}

MlpParams mlp_from_json(const json& j) {
  MlpParams p;
  for (const auto& lj : j.at("layers")) {
    const auto in = lj.at("in").get<std::size_t>();
    const auto out = lj.at("out").get<std::size_t>();
    auto w = lj.at("weight").get<std::vector<double>>();
    if (w.size() != in * out) throw ShapeError("checkpoint: weight length does not match in x out");
    DenseLayer l{Matrix(in, out, std::move(w)), lj.at("bias").get<std::vector<double>>(),
                 activation_from_string(lj.at("activation").get<std::string>())};
    if (l.bias.size() != out) throw ShapeError("checkpoint: bias length does not match out");
    p.layers.push_back(std::move(l));
  }
  try {
    p.validate();
  } catch (const DimensionError& e) {
    throw ShapeError(std::string("checkpoint: ") + e.what());
  }
  return p;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json couplings = json::array();
  for (const auto& l : ckpt.model.layers) {
    couplings.push_back({{"mask_parity", l.mask_parity},
                         {"scale_clamp", l.scale_clamp},
                         {"scale_net", mlp_to_json(l.scale_net)},
                         {"shift_net", mlp_to_json(l.shift_net)}});
  }
  const json j{{"format", ckpt.format},
               {"flow_config", to_json(ckpt.model.config)},
               {"prior", to_json(ckpt.model.prior)},
               {"train_config", to_json(ckpt.train)},
               {"epoch", ckpt.epoch},
               {"final_loss", ckpt.final_loss},
               {"dataset_fingerprint", ckpt.dataset_fingerprint},
               {"couplings", couplings}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptFileError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw CorruptFileError("checkpoint " + path.string() + " is corrupt: " + e.what());
  }
  if (!j.is_object() || !j.contains("format") || !j["format"].is_string())
    throw CorruptFileError("checkpoint " + path.string() + " has no format field");
  if (j["format"].get<std::string>() != kCheckpointFormat)
    throw VersionError("checkpoint " + path.string() + " has unsupported format " +
                       j["format"].dump() + " (expected " + kCheckpointFormat + ")");
  Checkpoint ck;
  try {
    ck.model.config = flow_config_from_json(j.at("flow_config"));
    ck.model.prior = prior_config_from_json(j.at("prior"));
    ck.train = train_config_from_json(j.at("train_config"));
    ck.epoch = j.at("epoch").get<std::size_t>();
    ck.final_loss = j.at("final_loss").get<double>();
    ck.dataset_fingerprint = j.at("dataset_fingerprint").get<std::uint64_t>();
    for (const auto& cj : j.at("couplings")) {
      CouplingLayer l;
      assign_mask(l, ck.model.config.dim, cj.at("mask_parity").get<int>());
      l.scale_clamp = cj.at("scale_clamp").get<double>();
      l.scale_net = mlp_from_json(cj.at("scale_net"));
      l.shift_net = mlp_from_json(cj.at("shift_net"));
      ck.model.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw CorruptFileError("checkpoint " + path.string() + " is corrupt: " + e.what());
  } catch (const ConfigError& e) {
    throw CorruptFileError("checkpoint " + path.string() + " is corrupt: " + e.what());
  }
  if (ck.model.layers.size() != ck.model.config.num_couplings)
    throw ShapeError("checkpoint: coupling count does not match flow_config");
  if (ck.model.prior.dim != ck.model.config.dim)
    throw ShapeError("checkpoint: prior and flow dimensions disagree");
  ck.model.validate();
  return ck;
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,mean_nll,mean_contrastive,total\n";
  out << std::setprecision(17);
  for (const auto& r : trace)
    out << r.epoch << ',' << r.mean_nll << ',' << r.mean_contrastive << ',' << r.total << '\n';
}

}  // namespace flowplug
