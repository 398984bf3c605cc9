#pragma once

#include <span>
#include <vector>

#include "flowplug/flow.hpp"
#include "flowplug/probe.hpp"
#include "flowplug/stack.hpp"

namespace flowplug {

enum class EditMode { Absolute, StepSearch };

struct EditRequest {
  std::size_t attr_index = 0;
  double target = 1.0;
  EditMode mode = EditMode::Absolute;
};

// Per-layer latents with coordinate attr_index of c overwritten by target.
// Everything else is the untouched output of to_latent.
std::vector<LatentPair> edit_latents(const FlowModel& model, const StyleStack& stack,
                                     const EditRequest& req);

// Absolute edit: map to latents, set the attribute coordinate at every
// layer, map back. StepSearch requests are rejected here (see minimal_edit).
StyleStack edit_attribute(const FlowModel& model, const StyleStack& stack, const EditRequest& req);

struct MinimalEditParams {
  double tau = 0.8;
  double delta = 0.25;
  std::size_t max_steps = 40;

  void validate() const;
  bool operator==(const MinimalEditParams&) const = default;
};

struct MinimalEditResult {
  StyleStack stack;  // accepted stack, or the last one tried when not converged
  std::size_t steps = 0;
  bool converged = false;
};

// Walks the attribute coordinate by direction * delta per step (same offset
// at every layer) until the probe's confidence in class `direction` reaches
// tau. Step 0 is the unmodified round trip.
MinimalEditResult minimal_edit(const FlowModel& model, const StyleStack& stack,
                               std::size_t attr_index, int direction, const ProbeModel& probe,
                               const MinimalEditParams& params);

// Same search for many stacks at once, advancing all unfinished stacks one
// step per round so that flow inversions run as one batch. Results equal
// calling minimal_edit on each stack.
std::vector<MinimalEditResult> minimal_edit_batch(const FlowModel& model,
                                                  std::span<const StyleStack> stacks,
                                                  std::size_t attr_index,
                                                  std::span<const int> directions,
                                                  const ProbeModel& probe,
                                                  const MinimalEditParams& params);

// num_points linearly spaced absolute targets from `from` to `to`.
std::vector<StyleStack> interpolate_attribute(const FlowModel& model, const StyleStack& stack,
                                              std::size_t attr_index, double from, double to,
                                              std::size_t num_points);

}  // namespace flowplug
