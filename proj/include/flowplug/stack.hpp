#pragma once

#include <span>
#include <vector>

#include "flowplug/flow.hpp"
#include "flowplug/matrix.hpp"
#include "flowplug/prior.hpp"

namespace flowplug {

// One "image": k per-layer style codes with its labels and identity.
struct StyleStack {
  std::vector<std::vector<double>> codes;  // codes[i] feeds layer i
  LabelVector labels;
  int identity_id = 0;
  int frame_id = 0;

  std::size_t num_layers() const { return codes.size(); }
  std::size_t dim() const { return codes.empty() ? 0 : codes.front().size(); }
  StyleCode code(std::size_t layer) const { return {codes.at(layer), layer}; }

  // Throws DimensionError unless there are exactly k codes of length N and
  // (when num_attributes > 0) M labels.
  void validate(std::size_t k, std::size_t n, std::size_t num_attributes = 0) const;

  bool operator==(const StyleStack&) const = default;
};

// Frames of one person; the unit of the contrastive term.
struct IdentityGroup {
  int identity_id = 0;
  std::vector<const StyleStack*> frames;
};

// Rows ordered stack-major: row s*k + l holds layer l of stacks[s].
Matrix stack_rows(std::span<const StyleStack* const> stacks, std::vector<std::size_t>* cond);
Matrix stack_rows(std::span<const StyleStack> stacks, std::vector<std::size_t>* cond);

// Inverse of stack_rows for the codes; labels and ids copied from templates.
std::vector<StyleStack> stacks_from_rows(const Matrix& rows,
                                         std::span<const StyleStack* const> templates);

// Largest |a-b| / max(1, |b|) over all codes.
double max_relative_difference(const StyleStack& a, const StyleStack& b);

}  // namespace flowplug
