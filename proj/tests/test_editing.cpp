#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "flowplug/editing.hpp"
#include "flowplug/errors.hpp"
#include "flowplug/evaluation.hpp"
#include "helpers.hpp"

namespace flowplug {
namespace {

FlowModel identity_flow(std::size_t n, std::size_t k, std::size_t m) {
  FlowConfig fc;
  fc.dim = n;
  fc.num_conditions = k;
  fc.hidden_width = 8;
  return make_flow(fc, PriorConfig{m, n, 0.5}, 3);
}

// Probe trained on a small identity-backbone dataset, so scores respond to
// the raw attribute coordinates.
struct ProbeFixture {
  SyntheticDataset ds;
  ProbeModel probe;
  ProbeFixture() {
    const SyntheticConfig cfg = testing::small_data_config();
    ds = generate_dataset(cfg, 8, make_identity_backbone(cfg));
    ProbeConfig pc;
    pc.hidden_width = 0;
    pc.epochs = 200;
    probe = train_probe(ds.stacks, ds.stacks, pc);
  }
};

const ProbeFixture& fixture() {
  static const ProbeFixture f;
  return f;
}

TEST(EditAttribute, NoOpEditIsARoundTrip) {
  const FlowModel f = testing::random_flow(8, 3, 2, 11);
  std::mt19937_64 rng(1);
  const StyleStack st = testing::random_stack(3, 8, 2, rng);
  // Target equal to the current value: only possible when every layer shares
  // it, so overwrite the codes to make layer latents agree on coordinate 0.
  StyleStack same = st;
  const auto pairs = edit_latents(f, st, {0, 0.0, EditMode::Absolute});
  for (std::size_t l = 0; l < 3; ++l) {
    LatentPair p = pairs[l];
    p.c[0] = 0.7;
    same.codes[l] = to_style(f, p, l).w;
  }
  const StyleStack out = edit_attribute(f, same, {0, 0.7, EditMode::Absolute});
  EXPECT_LT(max_relative_difference(out, same), 1e-6);
}

TEST(EditAttribute, IdentityFlowChangesExactlyOneCoordinate) {
  const FlowModel f = identity_flow(6, 2, 3);
  std::mt19937_64 rng(2);
  const StyleStack st = testing::random_stack(2, 6, 3, rng);
  const StyleStack out = edit_attribute(f, st, {1, -1.0, EditMode::Absolute});
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(out.codes[l][c], c == 1 ? -1.0 : st.codes[l][c]);
  EXPECT_EQ(out.labels, st.labels);
  EXPECT_EQ(out.identity_id, st.identity_id);
}

TEST(EditAttribute, LatentsAreSurgical) {
  const FlowModel f = testing::random_flow(8, 3, 3, 13);
  std::mt19937_64 rng(3);
  const StyleStack st = testing::random_stack(3, 8, 3, rng);
  const auto edited = edit_latents(f, st, {2, 1.0, EditMode::Absolute});
  for (std::size_t l = 0; l < 3; ++l) {
    const auto orig = to_latent(f, st.code(l)).pair;
    EXPECT_EQ(edited[l].s, orig.s);
    for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(edited[l].c[a], a == 2 ? 1.0 : orig.c[a]);
  }
}

TEST(EditAttribute, Idempotent) {
  const FlowModel f = testing::random_flow(8, 3, 2, 17);
  std::mt19937_64 rng(4);
  const StyleStack st = testing::random_stack(3, 8, 2, rng);
  const EditRequest req{0, 1.0, EditMode::Absolute};
  const StyleStack once = edit_attribute(f, st, req);
  const StyleStack twice = edit_attribute(f, once, req);
  EXPECT_LT(max_relative_difference(twice, once), 2e-6);
}

TEST(EditAttribute, RejectsBadRequests) {
  const FlowModel f = identity_flow(6, 2, 2);
  std::mt19937_64 rng(5);
  const StyleStack st = testing::random_stack(2, 6, 2, rng);
  EXPECT_THROW(edit_attribute(f, st, {2, 1.0, EditMode::Absolute}), DimensionError);
  EXPECT_THROW(edit_attribute(f, st, {0, INFINITY, EditMode::Absolute}), DimensionError);
  EXPECT_THROW(edit_attribute(f, st, {0, 1.0, EditMode::StepSearch}), ConfigError);
  StyleStack short_stack = st;
  short_stack.codes.pop_back();
  EXPECT_THROW(edit_attribute(f, short_stack, {0, 1.0, EditMode::Absolute}), DimensionError);
}

TEST(MinimalEdit, AlreadyConfidentTakesZeroSteps) {
  const auto& fx = fixture();
  const FlowModel f = identity_flow(fx.ds.config.dim, fx.ds.config.num_layers, 2);
  const MinimalEditParams params;
  for (const auto& st : fx.ds.stacks) {
    const double score = fx.probe.scores(st)[0];
    const int dir = probe_decision(score);
    if (probe_confidence(score, dir) < params.tau) continue;
    const auto res = minimal_edit(f, st, 0, dir, fx.probe, params);
    EXPECT_TRUE(res.converged);
    EXPECT_EQ(res.steps, 0u);
    EXPECT_LT(max_relative_difference(res.stack, st), 1e-12);
    return;
  }
  FAIL() << "no confidently classified stack";
}

// Exhaustive scan of the step grid with the identity flow, where step s is
// simply the raw attribute coordinate shifted by s * dir * delta.
TEST(MinimalEdit, MatchesExhaustiveScan) {
  const auto& fx = fixture();
  const FlowModel f = identity_flow(fx.ds.config.dim, fx.ds.config.num_layers, 2);
  const MinimalEditParams params{0.8, 0.1, 60};
  std::size_t checked = 0;
  for (std::size_t i = 0; i < 30; ++i) {
    const StyleStack& st = fx.ds.stacks[i];
    for (std::size_t attr = 0; attr < 2; ++attr) {
      const int dir = -probe_decision(fx.probe.scores(st)[attr]);
      std::size_t expected = params.max_steps + 1;
      for (std::size_t s = 0; s <= params.max_steps; ++s) {
        StyleStack moved = st;
        for (auto& code : moved.codes) code[attr] += static_cast<double>(s) * dir * params.delta;
        if (probe_confidence(fx.probe.scores(moved)[attr], dir) >= params.tau) {
          expected = s;
          break;
        }
      }
      const auto res = minimal_edit(f, st, attr, dir, fx.probe, params);
      if (expected > params.max_steps) {
        EXPECT_FALSE(res.converged);
      } else {
        EXPECT_TRUE(res.converged);
        EXPECT_EQ(res.steps, expected);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 40u);
}

TEST(MinimalEdit, BatchEqualsPerStack) {
  const auto& fx = fixture();
  const FlowModel f = testing::random_flow(fx.ds.config.dim, fx.ds.config.num_layers, 2, 5, 4, 8, 0.05);
  std::vector<StyleStack> stacks(fx.ds.stacks.begin(), fx.ds.stacks.begin() + 12);
  std::vector<int> dirs;
  for (const auto& st : stacks) dirs.push_back(-probe_decision(fx.probe.scores(st)[1]));
  const MinimalEditParams params;
  const auto batch = minimal_edit_batch(f, stacks, 1, dirs, fx.probe, params);
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    const auto single = minimal_edit(f, stacks[i], 1, dirs[i], fx.probe, params);
    EXPECT_EQ(batch[i].steps, single.steps);
    EXPECT_EQ(batch[i].converged, single.converged);
    EXPECT_EQ(batch[i].stack, single.stack);
  }
}

TEST(MinimalEdit, ImpossibleThresholdDoesNotConverge) {
  const auto& fx = fixture();
  const FlowModel f = identity_flow(fx.ds.config.dim, fx.ds.config.num_layers, 2);
  const MinimalEditParams params{1.0 + 1e-9, 0.25, 7};
  const auto res = minimal_edit(f, fx.ds.stacks[0], 0, 1, fx.probe, params);
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.steps, 7u);
  // The last stack tried is returned.
  StyleStack last = fx.ds.stacks[0];
  for (auto& code : last.codes) code[0] += 7 * 0.25;
  EXPECT_LT(max_relative_difference(res.stack, last), 1e-12);
}

TEST(MinimalEdit, FinerGridNeverOvershootsFurther) {
  const auto& fx = fixture();
  const FlowModel f = identity_flow(fx.ds.config.dim, fx.ds.config.num_layers, 2);
  const MinimalEditParams coarse{0.8, 0.2, 40};
  const MinimalEditParams fine{0.8, 0.1, 80};
  for (std::size_t i = 0; i < 30; ++i) {
    const auto& st = fx.ds.stacks[i];
    const int dir = -probe_decision(fx.probe.scores(st)[0]);
    const auto a = minimal_edit(f, st, 0, dir, fx.probe, coarse);
    const auto b = minimal_edit(f, st, 0, dir, fx.probe, fine);
    ASSERT_TRUE(a.converged && b.converged);
    EXPECT_LE(static_cast<double>(b.steps) * fine.delta, static_cast<double>(a.steps) * coarse.delta + 1e-12);
  }
}

TEST(MinimalEdit, RejectsBadArguments) {
  const auto& fx = fixture();
  const FlowModel f = identity_flow(fx.ds.config.dim, fx.ds.config.num_layers, 2);
  EXPECT_THROW(minimal_edit(f, fx.ds.stacks[0], 0, 0, fx.probe, {}), DimensionError);
  EXPECT_THROW(minimal_edit(f, fx.ds.stacks[0], 0, 1, fx.probe, {0.8, 0.0, 5}), ConfigError);
  EXPECT_THROW(minimal_edit(f, fx.ds.stacks[0], 5, 1, fx.probe, {}), DimensionError);
}

TEST(Interpolate, EndpointsAndMidpoint) {
  const FlowModel f = identity_flow(6, 2, 2);
  std::mt19937_64 rng(6);
  const StyleStack st = testing::random_stack(2, 6, 2, rng);
  const auto two = interpolate_attribute(f, st, 0, -1.0, 1.0, 2);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].codes[0][0], -1.0);
  EXPECT_EQ(two[1].codes[0][0], 1.0);
  const auto five = interpolate_attribute(f, st, 0, -1.5, 2.5, 5);
  ASSERT_EQ(five.size(), 5u);
  EXPECT_DOUBLE_EQ(five[2].codes[1][0], 0.5);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_GT(five[i].codes[0][0], five[i - 1].codes[0][0]);
  EXPECT_THROW(interpolate_attribute(f, st, 0, -1.0, 1.0, 1), DimensionError);
}

TEST(Interpolate, ProbeScoreIsMonotoneAlongThePath) {
  const auto& fx = fixture();
  const FlowModel f = identity_flow(fx.ds.config.dim, fx.ds.config.num_layers, 2);
  std::size_t monotone = 0, triples = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto path = interpolate_attribute(f, fx.ds.stacks[i], 1, -1.0, 1.0, 9);
    std::vector<double> s;
    for (const auto& p : path) s.push_back(fx.probe.scores(p)[1]);
    for (std::size_t t = 0; t + 2 < s.size(); ++t, ++triples)
      if (s[t] <= s[t + 1] && s[t + 1] <= s[t + 2]) ++monotone;
  }
  EXPECT_GE(static_cast<double>(monotone), 0.9 * static_cast<double>(triples));
}

}  // namespace
}  // namespace flowplug
