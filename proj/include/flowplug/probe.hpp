#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowplug/matrix.hpp"
#include "flowplug/mlp.hpp"
#include "flowplug/stack.hpp"

namespace flowplug {

enum class ProbeInput { MeanCode, Flatten };

struct ProbeConfig {
  std::size_t hidden_width = 64;  // 0 gives a linear readout
  std::size_t epochs = 150;
  std::size_t batch_size = 64;
  double lr = 3e-3;
  // The mean over layers loses too much of the per-layer structure to
  // generalise across identities; the full stack keeps the codes invertible.
  ProbeInput input = ProbeInput::Flatten;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ProbeConfig&) const = default;
};

// Attribute predictor fitted on raw style codes and labels only. Scores are
// regressions onto the standardized labels, so a binary decision is the sign
// of the score.
struct ProbeModel {
  ProbeInput input = ProbeInput::MeanCode;
  MlpParams net;
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
  std::vector<double> heldout_accuracy;  // per attribute, percent

  std::size_t num_attributes() const { return net.out_dim(); }
  std::vector<double> features(const StyleStack& stack) const;
  std::vector<double> scores(const StyleStack& stack) const;
  // One row of M scores per stack.
  Matrix scores(std::span<const StyleStack> stacks) const;
};

// Confidence that the score belongs to class direction (+1 or -1). Scores are
// mapped linearly so that the class means -1/+1 give confidence 0/1.
double probe_confidence(double score, int direction);
inline int probe_decision(double score) { return score >= 0.0 ? 1 : -1; }

// Throws ConfigError if any attribute's training labels all share one sign.
ProbeModel train_probe(std::span<const StyleStack> train, std::span<const StyleStack> heldout,
                       const ProbeConfig& cfg);

// Percent of stacks whose decision sign matches the label sign, per attribute.
std::vector<double> probe_accuracy(const ProbeModel& probe, std::span<const StyleStack> stacks);

}  // namespace flowplug
