#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "flowplug/errors.hpp"
#include "flowplug/training.hpp"
#include "helpers.hpp"

namespace flowplug {
namespace {

FlowConfig small_flow(const SyntheticConfig& d) {
  FlowConfig fc;
  fc.dim = d.dim;
  fc.num_conditions = d.num_layers;
  fc.num_couplings = 4;
  fc.hidden_width = 16;
  return fc;
}

TrainConfig small_train(const SyntheticConfig& d, std::size_t epochs = 3) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_groups = 4;
  tc.frames_per_group = 6;
  tc.seed = 5;
  tc.adam.lr = 3e-3;
  tc.loss.prior = PriorConfig{d.num_attributes, d.dim, 0.5};
  return tc;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Batches, DefaultDatasetGivesTwentyBatchesCoveringEveryFrame) {
  const auto ds = generate_dataset(SyntheticConfig{}, 1);
  TrainConfig tc;
  const auto batches = make_batches(ds, tc, 1);
  ASSERT_EQ(batches.size(), 20u);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) {
    EXPECT_LE(b.size(), 5u);
    for (const auto& g : b) {
      EXPECT_LE(g.size(), 20u);
      for (auto i : g) {
        EXPECT_EQ(ds.stacks[i].identity_id, ds.stacks[g.front()].identity_id);
        seen.insert(i);
      }
    }
  }
  EXPECT_EQ(seen.size(), 2000u);
  EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 2000u);
}

TEST(Batches, DeterministicPerSeedAndEpoch) {
  const auto ds = generate_dataset(testing::small_data_config(), 1);
  TrainConfig tc = small_train(ds.config);
  EXPECT_EQ(make_batches(ds, tc, 2), make_batches(ds, tc, 2));
  EXPECT_NE(make_batches(ds, tc, 2), make_batches(ds, tc, 3));
  TrainConfig other = tc;
  other.seed = 6;
  EXPECT_NE(make_batches(ds, tc, 2), make_batches(ds, other, 2));
}

TEST(Training, SingleFrameGroupsHaveNoContrastiveTerm) {
  const auto ds = generate_dataset(testing::small_data_config(), 2);
  TrainConfig tc = small_train(ds.config, 2);
  tc.frames_per_group = 1;
  const auto res = train(ds, small_flow(ds.config), tc);
  for (const auto& row : res.trace) {
    EXPECT_EQ(row.mean_contrastive, 0.0);
    EXPECT_DOUBLE_EQ(row.total, row.mean_nll);
  }
}

TEST(Training, ZeroLearningRateKeepsModelAndTrace) {
  const auto ds = generate_dataset(testing::small_data_config(), 2);
  TrainConfig tc = small_train(ds.config, 3);
  tc.adam.lr = 0.0;
  const auto res = train(ds, small_flow(ds.config), tc);
  TrainConfig one_epoch = tc;
  one_epoch.epochs = 1;
  const auto res0 = train(ds, small_flow(ds.config), one_epoch);
  EXPECT_EQ(res.checkpoint.model, res0.checkpoint.model);
  ASSERT_EQ(res.trace.size(), 4u);
  for (const auto& row : res.trace) {
    EXPECT_NEAR(row.mean_nll, res.trace[0].mean_nll, 1e-9 * std::abs(res.trace[0].mean_nll));
    EXPECT_NEAR(row.total, res.trace[0].total, 1e-9 * std::abs(res.trace[0].total));
  }
}

TEST(Training, LossDecreases) {
  const auto ds = generate_dataset(testing::small_data_config(), 3);
  const auto res = train(ds, small_flow(ds.config), small_train(ds.config, 10));
  ASSERT_EQ(res.trace.size(), 11u);
  EXPECT_LT(res.trace.back().total, res.trace.front().total);
  EXPECT_EQ(res.checkpoint.final_loss, res.trace.back().total);
  EXPECT_EQ(res.checkpoint.epoch, 10u);
}

TEST(Training, LambdaOnlyChangesTheContrastiveWeight) {
  const auto ds = generate_dataset(testing::small_data_config(), 3);
  TrainConfig a = small_train(ds.config, 1);
  TrainConfig b = a;
  b.loss.lambda_contrastive = 0.0;
  const auto ra = train(ds, small_flow(ds.config), a);
  const auto rb = train(ds, small_flow(ds.config), b);
  EXPECT_EQ(ra.trace[0].mean_nll, rb.trace[0].mean_nll);
  EXPECT_EQ(ra.trace[0].mean_contrastive, rb.trace[0].mean_contrastive);
  EXPECT_DOUBLE_EQ(rb.trace[0].total, rb.trace[0].mean_nll);
  EXPECT_NE(ra.checkpoint.model, rb.checkpoint.model);
}

TEST(Training, DeterministicAndProgressCallback) {
  const auto ds = generate_dataset(testing::small_data_config(), 3);
  const auto tc = small_train(ds.config, 2);
  std::vector<TraceRow> seen;
  const auto a = train(ds, small_flow(ds.config), tc, [&](const TraceRow& r) { seen.push_back(r); });
  const auto b = train(ds, small_flow(ds.config), tc);
  EXPECT_EQ(a.checkpoint, b.checkpoint);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(seen, a.trace);
}

TEST(Training, DivergenceIsReportedWithItsLocation) {
  const auto ds = generate_dataset(testing::small_data_config(), 3);
  TrainConfig tc = small_train(ds.config, 3);
  tc.adam.lr = 1e200;  // first update makes the activations overflow
  try {
    train(ds, small_flow(ds.config), tc);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Training, RejectsMismatchedDimensions) {
  const auto ds = generate_dataset(testing::small_data_config(), 3);
  FlowConfig fc = small_flow(ds.config);
  fc.dim = 10;
  EXPECT_THROW(train(ds, fc, small_train(ds.config)), ConfigError);
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = testing::scratch_dir("checkpoint");
    ds = generate_dataset(testing::small_data_config(), 4);
    result = train(ds, small_flow(ds.config), small_train(ds.config, 1));
    save_checkpoint(result.checkpoint, dir / "ck.json");
    text = read_file(dir / "ck.json");
  }
  std::filesystem::path dir;
  SyntheticDataset ds;
  TrainResult result;
  std::string text;
};

TEST_F(CheckpointTest, RoundTripIsBitIdentical) {
  const Checkpoint loaded = load_checkpoint(dir / "ck.json");
  EXPECT_EQ(loaded, result.checkpoint);
  EXPECT_EQ(flatten_params(loaded.model), flatten_params(result.checkpoint.model));
  save_checkpoint(loaded, dir / "ck2.json");
  EXPECT_EQ(read_file(dir / "ck2.json"), text);
}

TEST_F(CheckpointTest, TruncatedFileIsCorrupt) {
  std::ofstream(dir / "trunc.json") << text.substr(0, text.size() / 3);
  EXPECT_THROW(load_checkpoint(dir / "trunc.json"), CorruptFileError);
  EXPECT_THROW(load_checkpoint(dir / "absent.json"), CorruptFileError);
}

TEST_F(CheckpointTest, EditedVersionIsRejected) {
  std::string edited = text;
  const auto pos = edited.find(kCheckpointFormat);
  ASSERT_NE(pos, std::string::npos);
  edited.replace(pos, std::string(kCheckpointFormat).size(), "flowplug-ckpt-v0");
  std::ofstream(dir / "version.json") << edited;
  EXPECT_THROW(load_checkpoint(dir / "version.json"), VersionError);
}

TEST_F(CheckpointTest, WrongShapeIsRejected) {
  auto j = nlohmann::json::parse(text);
  auto& weight = j["couplings"][0]["scale_net"]["layers"][0]["weight"];
  weight.erase(weight.size() - 1);
  std::ofstream(dir / "shape.json") << j.dump();
  EXPECT_THROW(load_checkpoint(dir / "shape.json"), ShapeError);
}

TEST_F(CheckpointTest, TraceCsvHasOneRowPerEpoch) {
  write_trace_csv(result.trace, dir / "loss.csv");
  std::ifstream in(dir / "loss.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,mean_nll,mean_contrastive,total");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, result.trace.size());
}

}  // namespace
}  // namespace flowplug
