#include "flowplug/stack.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flowplug/errors.hpp"

namespace flowplug {

void StyleStack::validate(std::size_t k, std::size_t n, std::size_t num_attributes) const {
  if (codes.size() != k)
    throw DimensionError("style stack has " + std::to_string(codes.size()) + " codes, expected " +
                         std::to_string(k));
  for (const auto& c : codes)
    if (c.size() != n)
      throw DimensionError("style code length " + std::to_string(c.size()) + " != " +
                           std::to_string(n));
  if (num_attributes > 0 && labels.size() != num_attributes)
    throw DimensionError("style stack has " + std::to_string(labels.size()) +
                         " labels, expected " + std::to_string(num_attributes));
}

Matrix stack_rows(std::span<const StyleStack* const> stacks, std::vector<std::size_t>* cond) {
  if (stacks.empty()) return {};
  const std::size_t k = stacks.front()->num_layers();
  const std::size_t n = stacks.front()->dim();
  Matrix rows(stacks.size() * k, n);
  if (cond) cond->resize(stacks.size() * k);
  for (std::size_t s = 0; s < stacks.size(); ++s) {
    stacks[s]->validate(k, n);
    for (std::size_t l = 0; l < k; ++l) {
      std::copy(stacks[s]->codes[l].begin(), stacks[s]->codes[l].end(), rows.row(s * k + l).begin());
      if (cond) (*cond)[s * k + l] = l;
    }
  }
  return rows;
}

Matrix stack_rows(std::span<const StyleStack> stacks, std::vector<std::size_t>* cond) {
  std::vector<const StyleStack*> ptrs;
  ptrs.reserve(stacks.size());
  for (const auto& s : stacks) ptrs.push_back(&s);
  return stack_rows(ptrs, cond);
}

std::vector<StyleStack> stacks_from_rows(const Matrix& rows,
                                         std::span<const StyleStack* const> templates) {
  std::vector<StyleStack> out;
  if (templates.empty()) return out;
  const std::size_t k = templates.front()->num_layers();
  if (rows.rows() != templates.size() * k)
    throw DimensionError("stacks_from_rows: row count does not match templates");
  out.reserve(templates.size());
  for (std::size_t s = 0; s < templates.size(); ++s) {
    StyleStack st;
    st.labels = templates[s]->labels;
    st.identity_id = templates[s]->identity_id;
    st.frame_id = templates[s]->frame_id;
    for (std::size_t l = 0; l < k; ++l) {
      const auto r = rows.row(s * k + l);
      st.codes.emplace_back(r.begin(), r.end());
    }
    out.push_back(std::move(st));
  }
  return out;
}

double max_relative_difference(const StyleStack& a, const StyleStack& b) {
  if (a.codes.size() != b.codes.size()) throw DimensionError("stacks differ in layer count");
  double worst = 0.0;
  for (std::size_t l = 0; l < a.codes.size(); ++l) {
    if (a.codes[l].size() != b.codes[l].size()) throw DimensionError("stacks differ in code length");
    for (std::size_t i = 0; i < a.codes[l].size(); ++i) {
      const double d = std::abs(a.codes[l][i] - b.codes[l][i]) / std::max(1.0, std::abs(b.codes[l][i]));
      worst = std::max(worst, d);
    }
  }
  return worst;
}

}  // namespace flowplug
