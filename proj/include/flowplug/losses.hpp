#pragma once

#include <span>
#include <vector>

#include "flowplug/flow.hpp"
#include "flowplug/prior.hpp"
#include "flowplug/stack.hpp"

namespace flowplug {

struct LossConfig {
  double lambda_contrastive = 1.0;
  PriorConfig prior;
  // Divide each group's contrastive sum by n(n-1), the number of ordered pairs.
  bool normalize_groups = true;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

// Negative conditional log-likelihood of one stack, summed over its k codes.
double nll_loss(const FlowModel& model, const StyleStack& stack, const LossConfig& cfg);

// Sum over ordered pairs i != j of |s_i - s_j|^2 for one identity group,
// evaluated through the equivalent 2n * sum_i |s_i - m|^2 with m the mean.
double contrastive_loss(std::span<const std::vector<double>> s_vectors, bool normalize = false);

struct LossBreakdown {
  double mean_nll = 0.0;
  double mean_contrastive = 0.0;
  double total = 0.0;
  // Raw sums and counts, so epoch means can be weighted correctly.
  double sum_nll = 0.0;
  double sum_contrastive = 0.0;
  std::size_t num_stacks = 0;
  std::size_t num_contrastive_terms = 0;
};

// mean NLL over all stacks + lambda * mean over (group, layer) of the
// contrastive loss on that group's non-attribute vectors.
LossBreakdown total_loss(const FlowModel& model, std::span<const IdentityGroup> batch,
                         const LossConfig& cfg);

// Same value; parameter gradients are accumulated into grad (which must have
// the model's shape, typically model.zeros_like()).
LossBreakdown total_loss_and_gradient(const FlowModel& model, std::span<const IdentityGroup> batch,
                                      const LossConfig& cfg, FlowModel& grad);

}  // namespace flowplug
