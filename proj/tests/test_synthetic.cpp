#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "flowplug/errors.hpp"
#include "flowplug/synthetic.hpp"
#include "helpers.hpp"

namespace flowplug {
namespace {

using testing::gaussian_vector;

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Backbone, DeterministicPerSeed) {
  const SyntheticConfig cfg;
  const auto a = make_backbone(cfg, 5);
  const auto b = make_backbone(cfg, 5);
  const auto c = make_backbone(cfg, 6);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    EXPECT_EQ(a.mixing[l], b.mixing[l]);
    EXPECT_EQ(a.bias[l], b.bias[l]);
    EXPECT_NE(a.mixing[l], c.mixing[l]);
  }
}

// Singular values from the eigenvalues of A^T A, independent of how the
// backbone conditioned the matrices.
TEST(Backbone, ConditionNumbersAtMost100) {
  SyntheticConfig cfg;
  cfg.num_layers = 6;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto b = make_backbone(cfg, seed);
    for (const auto& a : b.mixing) {
      Eigen::MatrixXd m(a.rows(), a.cols());
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a(i, j);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.transpose() * m);
      const double smin = std::sqrt(es.eigenvalues().minCoeff());
      const double smax = std::sqrt(es.eigenvalues().maxCoeff());
      EXPECT_LE(smax / smin, 100.0 * (1.0 + 1e-9));
      EXPECT_GE(smin, 0.1 * (1.0 - 1e-9));
      EXPECT_LE(smax, 10.0 * (1.0 + 1e-9));
    }
  }
}

TEST(Backbone, StoredInverseIsTheInverse) {
  const auto b = make_backbone(SyntheticConfig{}, 9);
  for (std::size_t l = 0; l < b.num_layers(); ++l)
    for (std::size_t i = 0; i < b.dim(); ++i)
      for (std::size_t j = 0; j < b.dim(); ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < b.dim(); ++t) acc += b.mixing[l](i, t) * b.inverse[l](t, j);
        EXPECT_NEAR(acc, i == j ? 1.0 : 0.0, 1e-9);
      }
}

TEST(Backbone, IdentityBackboneInLinearRegion) {
  const SyntheticConfig cfg = testing::small_data_config();
  const auto b = make_identity_backbone(cfg);
  std::vector<double> f(cfg.dim);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = 0.1 + 0.2 * static_cast<double>(i);
  for (const auto& code : backbone_generate(b, f)) EXPECT_EQ(code, f);
  const std::vector<std::vector<double>> zero(cfg.num_layers, std::vector<double>(cfg.dim, 0.0));
  for (double v : backbone_invert(b, zero).mean) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, InversionRecoversFactors) {
  const SyntheticConfig cfg;
  const auto b = make_backbone(cfg, 3);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 1000; ++t) {
    const auto f = gaussian_vector(cfg.dim, rng, 2.0);
    const auto inv = backbone_invert(b, backbone_generate(b, f));
    ASSERT_LE(inv.max_disagreement, 1e-6);
    for (std::size_t i = 0; i < f.size(); ++i) ASSERT_NEAR(inv.mean[i], f[i], 1e-6);
  }
}

TEST(Backbone, RejectsWrongFactorLength) {
  const auto b = make_backbone(SyntheticConfig{}, 3);
  EXPECT_THROW(backbone_generate(b, std::vector<double>(5, 0.0)), DimensionError);
}

TEST(Dataset, DefaultSizeAndStructure) {
  const SyntheticConfig cfg;
  const auto ds = generate_dataset(cfg, 11);
  ASSERT_EQ(ds.stacks.size(), 2000u);
  ASSERT_EQ(ds.truth.size(), 2000u);
  for (std::size_t i = 0; i < ds.stacks.size(); ++i) {
    const auto& st = ds.stacks[i];
    EXPECT_NO_THROW(st.validate(cfg.num_layers, cfg.dim, cfg.num_attributes));
    EXPECT_EQ(st.identity_id, static_cast<int>(i / cfg.frames_per_identity));
    // Label noise 0: labels are exactly the attributes, which are +-1 coins.
    EXPECT_EQ(st.labels, ds.truth[i].attrs);
    for (double v : st.labels) EXPECT_TRUE(v == 1.0 || v == -1.0);
  }
}

TEST(Dataset, IdentityEmbeddingsConstantWithinAndDistinctAcross) {
  const SyntheticConfig cfg = testing::small_data_config();
  const auto ds = generate_dataset(cfg, 4);
  for (std::size_t i = 0; i < ds.stacks.size(); ++i)
    for (std::size_t j = i + 1; j < ds.stacks.size(); ++j) {
      const bool same = ds.stacks[i].identity_id == ds.stacks[j].identity_id;
      if (same) {
        EXPECT_EQ(ds.truth[i].identity_emb, ds.truth[j].identity_emb);
      } else {
        double d = 0.0;
        for (std::size_t c = 0; c < cfg.identity_dim; ++c)
          d = std::max(d, std::abs(ds.truth[i].identity_emb[c] - ds.truth[j].identity_emb[c]));
        EXPECT_GT(d, 1e-9);
      }
    }
}

TEST(Dataset, CodesAreTheBackboneOfTheFactors) {
  const SyntheticConfig cfg = testing::small_data_config();
  const auto ds = generate_dataset(cfg, 4);
  const auto b = ds.backbone();
  for (std::size_t i = 0; i < ds.stacks.size(); ++i)
    EXPECT_EQ(ds.stacks[i].codes, backbone_generate(b, ds.truth[i]));
}

TEST(Dataset, ContinuousAttributesAndLabelNoise) {
  SyntheticConfig cfg = testing::small_data_config();
  cfg.continuous_attributes = 1;
  cfg.label_noise = 0.1;
  const auto ds = generate_dataset(cfg, 4);
  double max_dev = 0.0;
  bool any_fractional = false;
  for (std::size_t i = 0; i < ds.stacks.size(); ++i) {
    for (std::size_t a = 0; a < cfg.num_attributes; ++a)
      max_dev = std::max(max_dev, std::abs(ds.stacks[i].labels[a] -
                                           label_to_mean(ds.truth[i].attrs[a], cfg.kind(a),
                                                         ds.attribute_stats[a])));
    const double c = ds.truth[i].attrs[1];
    any_fractional = any_fractional || (c != 1.0 && c != -1.0);
  }
  EXPECT_GT(max_dev, 0.0);
  EXPECT_LT(max_dev, 1.0);
  EXPECT_TRUE(any_fractional);
}

TEST(Dataset, SerializationIsByteIdenticalAndRoundTrips) {
  const auto dir = testing::scratch_dir("dataset");
  const SyntheticConfig cfg = testing::small_data_config();
  const auto a = generate_dataset(cfg, 77);
  const auto b = generate_dataset(cfg, 77);
  save_dataset(a, dir / "a.jsonl");
  save_dataset(b, dir / "b.jsonl");
  save_truth(a, dir / "a.truth.jsonl");
  EXPECT_EQ(read_file(dir / "a.jsonl"), read_file(dir / "b.jsonl"));

  SyntheticDataset loaded = load_dataset(dir / "a.jsonl");
  EXPECT_TRUE(loaded.truth.empty());
  load_truth(loaded, dir / "a.truth.jsonl");
  EXPECT_EQ(loaded, a);
  EXPECT_EQ(dataset_fingerprint(loaded), dataset_fingerprint(a));
  EXPECT_NE(dataset_fingerprint(generate_dataset(cfg, 78)), dataset_fingerprint(a));
}

TEST(Dataset, LoadErrorsAreDistinct) {
  const auto dir = testing::scratch_dir("dataset_errors");
  const auto ds = generate_dataset(testing::small_data_config(), 1);
  save_dataset(ds, dir / "ok.jsonl");
  const std::string text = read_file(dir / "ok.jsonl");

  std::ofstream(dir / "truncated.jsonl") << text.substr(0, text.size() / 2);
  EXPECT_THROW(load_dataset(dir / "truncated.jsonl"), CorruptFileError);

  std::string versioned = text;
  versioned.replace(versioned.find("flowplug-ds-v1"), 14, "flowplug-ds-v9");
  std::ofstream(dir / "version.jsonl") << versioned;
  EXPECT_THROW(load_dataset(dir / "version.jsonl"), VersionError);

  SyntheticDataset bad = ds;
  bad.stacks[3].codes[0].pop_back();
  save_dataset(bad, dir / "shape.jsonl");
  EXPECT_THROW(load_dataset(dir / "shape.jsonl"), ShapeError);

  EXPECT_THROW(load_dataset(dir / "missing.jsonl"), CorruptFileError);
}

TEST(Dataset, SplitByIdentityIsDisjoint) {
  const auto ds = generate_dataset(testing::small_data_config(), 2);
  const auto split = split_by_identity(ds, 0.2);
  EXPECT_EQ(split.train.size() + split.eval.size(), ds.stacks.size());
  EXPECT_EQ(split.eval.size(), 4u * 6u);
  int max_train = -1, min_eval = 1 << 30;
  for (auto i : split.train) max_train = std::max(max_train, ds.stacks[i].identity_id);
  for (auto i : split.eval) min_eval = std::min(min_eval, ds.stacks[i].identity_id);
  EXPECT_LT(max_train, min_eval);
}

TEST(SyntheticConfigTest, Validation) {
  SyntheticConfig c;
  c.identity_dim = 40;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SyntheticConfig{};
  c.num_identities = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace flowplug
