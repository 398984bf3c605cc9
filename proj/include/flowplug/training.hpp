#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "flowplug/adam.hpp"
#include "flowplug/flow.hpp"
#include "flowplug/losses.hpp"
#include "flowplug/synthetic.hpp"

namespace flowplug {

inline constexpr const char* kCheckpointFormat = "flowplug-ckpt-v1";

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_groups = 5;       // identity groups per batch
  std::size_t frames_per_group = 20;  // cap on frames in one group
  AdamHyper adam;
  std::uint64_t seed = 0;
  LossConfig loss;
  std::size_t eval_every = 1;  // progress callback interval in epochs, 0 = never
  double holdout_fraction = 0.2;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// A batch is a list of identity groups; each group lists dataset indices of
// frames from a single identity.
using Batch = std::vector<std::vector<std::size_t>>;

// Splits every identity's frames (restricted to subset) into groups of at
// most frames_per_group, shuffles, and packs batch_groups groups per batch.
// Deterministic in (cfg.seed, epoch).
std::vector<Batch> make_batches(const std::vector<StyleStack>& stacks,
                                std::span<const std::size_t> subset, const TrainConfig& cfg,
                                std::size_t epoch);
std::vector<Batch> make_batches(const SyntheticDataset& ds, const TrainConfig& cfg,
                                std::size_t epoch);

std::vector<IdentityGroup> resolve_batch(const std::vector<StyleStack>& stacks, const Batch& batch);

struct TraceRow {
  std::size_t epoch = 0;
  double mean_nll = 0.0;
  double mean_contrastive = 0.0;
  double total = 0.0;
  bool operator==(const TraceRow&) const = default;
};

struct Checkpoint {
  std::string format = kCheckpointFormat;
  FlowModel model;
  TrainConfig train;
  std::size_t epoch = 0;
  double final_loss = 0.0;
  std::uint64_t dataset_fingerprint = 0;

  bool operator==(const Checkpoint&) const = default;
};

struct TrainResult {
  Checkpoint checkpoint;
  // Row 0 evaluates the initial model (no updates); row e > 0 is the mean of
  // the per-batch losses seen during epoch e.
  std::vector<TraceRow> trace;
};

using EpochCallback = std::function<void(const TraceRow&)>;

// Trains on the frames listed in subset.
TrainResult train(const SyntheticDataset& ds, std::span<const std::size_t> subset,
                  const FlowConfig& flow_cfg, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});
// Trains on the identity-split training part (cfg.holdout_fraction).
TrainResult train(const SyntheticDataset& ds, const FlowConfig& flow_cfg, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws CorruptFileError, VersionError or ShapeError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path);

}  // namespace flowplug
