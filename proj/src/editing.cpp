#include "flowplug/editing.hpp"

#include <cmath>

#include "flowplug/errors.hpp"

namespace flowplug {

void MinimalEditParams::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("edit: tau must be positive");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("edit: delta must be positive");
  if (max_steps < 1) throw ConfigError("edit: max_steps must be >= 1");
}

namespace {

void check_request(const FlowModel& model, const StyleStack& stack, std::size_t attr) {
  stack.validate(model.num_conditions(), model.dim());
  if (attr >= model.prior.num_attributes)
    throw DimensionError("edit: attribute index " + std::to_string(attr) + " out of range");
}

// Latents of every stack, stack-major rows as in stack_rows.
Matrix latents(const FlowModel& model, std::span<const StyleStack* const> stacks,
               std::vector<std::size_t>& cond) {
  const Matrix w = stack_rows(stacks, &cond);
  return flow_forward(model, w, cond).z;
}

}  // namespace

std::vector<LatentPair> edit_latents(const FlowModel& model, const StyleStack& stack,
                                     const EditRequest& req) {
  check_request(model, stack, req.attr_index);
  if (!std::isfinite(req.target)) throw DimensionError("edit: target must be finite");
  std::vector<std::size_t> cond;
  const StyleStack* ptr = &stack;
  const Matrix z = latents(model, std::span(&ptr, 1), cond);
  std::vector<LatentPair> out;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    out.push_back(LatentPair::split(z.row(r), model.prior.num_attributes));
    out.back().c[req.attr_index] = req.target;
  }
  return out;
}

StyleStack edit_attribute(const FlowModel& model, const StyleStack& stack, const EditRequest& req) {
  if (req.mode != EditMode::Absolute)
    throw ConfigError("edit_attribute handles absolute edits; step-search needs minimal_edit");
  const auto pairs = edit_latents(model, stack, req);
  Matrix z(pairs.size(), model.dim());
  std::vector<std::size_t> cond(pairs.size());
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    const auto joined = pairs[r].joined();
    std::copy(joined.begin(), joined.end(), z.row(r).begin());
    cond[r] = r;
  }
  const StyleStack* ptr = &stack;
  return stacks_from_rows(flow_inverse(model, z, cond), std::span(&ptr, 1)).front();
}

MinimalEditResult minimal_edit(const FlowModel& model, const StyleStack& stack,
                               std::size_t attr_index, int direction, const ProbeModel& probe,
                               const MinimalEditParams& params) {
  const int dirs[1] = {direction};
  return minimal_edit_batch(model, std::span(&stack, 1), attr_index, dirs, probe, params).front();
}

std::vector<MinimalEditResult> minimal_edit_batch(const FlowModel& model,
                                                  std::span<const StyleStack> stacks,
                                                  std::size_t attr_index,
                                                  std::span<const int> directions,
                                                  const ProbeModel& probe,
                                                  const MinimalEditParams& params) {
  params.validate();
  if (directions.size() != stacks.size())
    throw DimensionError("minimal_edit: one direction per stack required");
  for (int d : directions)
    if (d != 1 && d != -1) throw DimensionError("minimal_edit: direction must be +1 or -1");
  if (attr_index >= probe.num_attributes())
    throw DimensionError("minimal_edit: probe does not score attribute " + std::to_string(attr_index));
  std::vector<const StyleStack*> ptrs;
  for (const auto& s : stacks) {
    check_request(model, s, attr_index);
    ptrs.push_back(&s);
  }
  const std::size_t k = model.num_conditions();
  std::vector<std::size_t> cond_all;
  const Matrix z_all = latents(model, ptrs, cond_all);

  std::vector<MinimalEditResult> results(stacks.size());
  std::vector<std::size_t> active(stacks.size());
  for (std::size_t i = 0; i < active.size(); ++i) active[i] = i;

  for (std::size_t step = 0; step <= params.max_steps && !active.empty(); ++step) {
    Matrix z(active.size() * k, model.dim());
    std::vector<std::size_t> cond(active.size() * k);
    std::vector<const StyleStack*> templates;
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t s = active[a];
      const double offset =
          static_cast<double>(step) * static_cast<double>(directions[s]) * params.delta;
      templates.push_back(ptrs[s]);
      for (std::size_t l = 0; l < k; ++l) {
        const auto src = z_all.row(s * k + l);
        auto dst = z.row(a * k + l);
        std::copy(src.begin(), src.end(), dst.begin());
        dst[attr_index] = src[attr_index] + offset;
        cond[a * k + l] = l;
      }
    }
    auto edited = stacks_from_rows(flow_inverse(model, z, cond), templates);
    const Matrix scores = probe.scores(edited);
    std::vector<std::size_t> still;
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t s = active[a];
      const bool accepted = probe_confidence(scores(a, attr_index), directions[s]) >= params.tau;
      if (accepted || step == params.max_steps) {
        results[s] = {std::move(edited[a]), step, accepted};
      } else {
        still.push_back(s);
      }
    }
    active = std::move(still);
  }
  return results;
}

std::vector<StyleStack> interpolate_attribute(const FlowModel& model, const StyleStack& stack,
                                              std::size_t attr_index, double from, double to,
                                              std::size_t num_points) {
  if (num_points < 2) throw DimensionError("interpolate_attribute: need at least two points");
  std::vector<StyleStack> out;
  out.reserve(num_points);
  for (std::size_t i = 0; i < num_points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(num_points - 1);
    const double target = i + 1 == num_points ? to : from + (to - from) * t;
    out.push_back(edit_attribute(model, stack, {attr_index, target, EditMode::Absolute}));
  }
  return out;
}

}  // namespace flowplug
