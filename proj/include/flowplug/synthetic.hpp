#pragma once

// Mock backbone standing in for a pretrained generator plus encoder. Ground
// truth factors f = (attributes, identity embedding, nuisance) are mapped to
// layer i's style code by w_i = leaky(A_i f + b_i) with a well-conditioned
// A_i and a leaky nonlinearity of slope 0.5, so every code can be inverted
// exactly back to f. That inverse is the evaluation oracle.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowplug/matrix.hpp"
#include "flowplug/prior.hpp"
#include "flowplug/stack.hpp"

namespace flowplug {

inline constexpr const char* kDatasetFormat = "flowplug-ds-v1";
inline constexpr const char* kTruthFormat = "flowplug-truth-v1";

struct SyntheticConfig {
  std::size_t num_identities = 100;
  std::size_t frames_per_identity = 20;
  std::size_t num_attributes = 4;         // M
  std::size_t continuous_attributes = 0;  // the last ones among the M
  std::size_t dim = 32;                   // N
  std::size_t num_layers = 4;             // k
  std::size_t identity_dim = 16;          // D_id
  double label_noise = 0.0;
  double leaky_slope = 0.5;

  std::size_t nuisance_dim() const { return dim - num_attributes - identity_dim; }
  AttributeKind kind(std::size_t attr) const {
    return attr + continuous_attributes >= num_attributes ? AttributeKind::Continuous
                                                          : AttributeKind::Binary;
  }
  void validate() const;
  bool operator==(const SyntheticConfig&) const = default;
};

struct GroundTruthFactors {
  std::vector<double> attrs;
  std::vector<double> identity_emb;
  std::vector<double> nuisance;

  std::vector<double> flat() const;
  static GroundTruthFactors from_flat(std::span<const double> f, const SyntheticConfig& cfg);
  bool operator==(const GroundTruthFactors&) const = default;
};

struct MockBackbone {
  std::vector<Matrix> mixing;   // A_i
  std::vector<Matrix> inverse;  // A_i^{-1}
  std::vector<std::vector<double>> bias;
  double leaky_slope = 0.5;
  std::uint64_t seed = 0;

  std::size_t num_layers() const { return mixing.size(); }
  std::size_t dim() const { return mixing.empty() ? 0 : mixing.front().rows(); }
};

// Gaussian matrices whose singular values are clipped to [0.1, 10].
MockBackbone make_backbone(const SyntheticConfig& cfg, std::uint64_t seed);
// A_i = I, b_i = 0 at every layer.
MockBackbone make_identity_backbone(const SyntheticConfig& cfg);

std::vector<std::vector<double>> backbone_generate(const MockBackbone& b,
                                                   std::span<const double> factors);
std::vector<std::vector<double>> backbone_generate(const MockBackbone& b,
                                                   const GroundTruthFactors& factors);

struct BackboneInversion {
  std::vector<std::vector<double>> per_layer;
  std::vector<double> mean;      // average over layers
  double max_disagreement = 0.0;  // largest |per_layer - mean|
};

BackboneInversion backbone_invert(const MockBackbone& b,
                                  const std::vector<std::vector<double>>& codes);

struct SyntheticDataset {
  SyntheticConfig config;
  std::uint64_t seed = 0;
  std::vector<StyleStack> stacks;
  std::vector<GroundTruthFactors> truth;  // parallel to stacks; empty when not loaded
  std::vector<AttributeStats> attribute_stats;

  // Reconstructs the backbone the data was generated with.
  MockBackbone backbone() const;
  bool operator==(const SyntheticDataset&) const = default;
};

SyntheticDataset generate_dataset(const SyntheticConfig& cfg, std::uint64_t seed);
// Same generator on an explicit backbone (e.g. the identity backbone).
SyntheticDataset generate_dataset(const SyntheticConfig& cfg, std::uint64_t seed,
                                  const MockBackbone& backbone);

std::uint64_t backbone_seed(std::uint64_t dataset_seed);

// JSON Lines: a header line, then one record per frame.
std::string dataset_header_line(const SyntheticDataset& ds);
void save_dataset(const SyntheticDataset& ds, const std::filesystem::path& path);
void save_truth(const SyntheticDataset& ds, const std::filesystem::path& path);
SyntheticDataset load_dataset(const std::filesystem::path& path);
// Fills ds.truth from a sidecar file written by save_truth.
void load_truth(SyntheticDataset& ds, const std::filesystem::path& path);

// FNV-1a of the header line.
std::uint64_t dataset_fingerprint(const SyntheticDataset& ds);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};

// The highest-numbered identities (a holdout_fraction share) go to eval.
DatasetSplit split_by_identity(const SyntheticDataset& ds, double holdout_fraction);

// Groups stack indices by identity, preserving first-appearance order.
std::vector<std::vector<std::size_t>> identity_index_groups(const std::vector<StyleStack>& stacks,
                                                            std::span<const std::size_t> subset);

}  // namespace flowplug
