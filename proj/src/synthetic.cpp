#include "flowplug/synthetic.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "flowplug/config.hpp"
#include "flowplug/errors.hpp"

namespace flowplug {

using nlohmann::json;

void SyntheticConfig::validate() const {
  if (num_identities < 1 || frames_per_identity < 1)
    throw ConfigError("synthetic: need at least one identity and one frame");
  if (dim < 1 || num_layers < 1) throw ConfigError("synthetic: N and k must be >= 1");
  if (num_attributes < 1) throw ConfigError("synthetic: need at least one attribute");
  if (num_attributes + identity_dim > dim)
    throw ConfigError("synthetic: M + D_id exceeds N");
  if (continuous_attributes > num_attributes)
    throw ConfigError("synthetic: more continuous attributes than attributes");
  if (!(label_noise >= 0.0)) throw ConfigError("synthetic: label_noise must be >= 0");
  if (!(leaky_slope > 0.0)) throw ConfigError("synthetic: leaky_slope must be positive");
}

std::vector<double> GroundTruthFactors::flat() const {
  std::vector<double> f(attrs);
  f.insert(f.end(), identity_emb.begin(), identity_emb.end());
  f.insert(f.end(), nuisance.begin(), nuisance.end());
  return f;
}

GroundTruthFactors GroundTruthFactors::from_flat(std::span<const double> f,
                                                 const SyntheticConfig& cfg) {
  if (f.size() != cfg.dim) throw DimensionError("factor vector length != N");
  const auto m = static_cast<std::ptrdiff_t>(cfg.num_attributes);
  const auto d = static_cast<std::ptrdiff_t>(cfg.identity_dim);
  return {{f.begin(), f.begin() + m}, {f.begin() + m, f.begin() + m + d}, {f.begin() + m + d, f.end()}};
}

std::uint64_t backbone_seed(std::uint64_t dataset_seed) {
  return dataset_seed * 0x9E3779B97F4A7C15ULL + 0x6A09E667F3BCC909ULL;
}

MockBackbone make_backbone(const SyntheticConfig& cfg, std::uint64_t seed) {
  if (cfg.dim < 1 || cfg.num_layers < 1) throw ConfigError("backbone: N and k must be >= 1");
  const auto n = static_cast<Eigen::Index>(cfg.dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  MockBackbone b;
  b.seed = seed;
  b.leaky_slope = cfg.leaky_slope;
  for (std::size_t layer = 0; layer < cfg.num_layers; ++layer) {
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) g(r, c) = unit(rng);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(g, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::VectorXd sv = svd.singularValues().cwiseMax(0.1).cwiseMin(10.0);
    const Eigen::MatrixXd a = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
    const Eigen::MatrixXd a_inv =
        svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
    Matrix am(cfg.dim, cfg.dim), ai(cfg.dim, cfg.dim);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) {
        am(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = a(r, c);
        ai(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = a_inv(r, c);
      }
    std::vector<double> bias(cfg.dim);
    for (double& v : bias) v = 0.5 * unit(rng);
    b.mixing.push_back(std::move(am));
    b.inverse.push_back(std::move(ai));
    b.bias.push_back(std::move(bias));
  }
  return b;
}

MockBackbone make_identity_backbone(const SyntheticConfig& cfg) {
  MockBackbone b;
  b.leaky_slope = cfg.leaky_slope;
  for (std::size_t layer = 0; layer < cfg.num_layers; ++layer) {
    b.mixing.push_back(Matrix::identity(cfg.dim));
    b.inverse.push_back(Matrix::identity(cfg.dim));
    b.bias.emplace_back(cfg.dim, 0.0);
  }
  return b;
}

std::vector<std::vector<double>> backbone_generate(const MockBackbone& b,
                                                   std::span<const double> factors) {
  if (factors.size() != b.dim())
    throw DimensionError("backbone_generate: factor length " + std::to_string(factors.size()) +
                         " != " + std::to_string(b.dim()));
  std::vector<std::vector<double>> codes(b.num_layers(), std::vector<double>(b.dim()));
  for (std::size_t layer = 0; layer < b.num_layers(); ++layer) {
    const Matrix& a = b.mixing[layer];
    for (std::size_t r = 0; r < b.dim(); ++r) {
      double v = b.bias[layer][r];
      for (std::size_t c = 0; c < b.dim(); ++c) v += a(r, c) * factors[c];
      codes[layer][r] = v < 0.0 ? b.leaky_slope * v : v;
    }
  }
  return codes;
}

std::vector<std::vector<double>> backbone_generate(const MockBackbone& b,
                                                   const GroundTruthFactors& factors) {
  return backbone_generate(b, factors.flat());
}

BackboneInversion backbone_invert(const MockBackbone& b,
                                  const std::vector<std::vector<double>>& codes) {
  if (codes.size() != b.num_layers()) throw DimensionError("backbone_invert: layer count mismatch");
  const std::size_t n = b.dim();
  BackboneInversion inv;
  inv.mean.assign(n, 0.0);
  std::vector<double> pre(n);
  for (std::size_t layer = 0; layer < codes.size(); ++layer) {
    if (codes[layer].size() != n) throw DimensionError("backbone_invert: code length mismatch");
    for (std::size_t r = 0; r < n; ++r) {
      const double y = codes[layer][r];
      pre[r] = (y < 0.0 ? y / b.leaky_slope : y) - b.bias[layer][r];
    }
    std::vector<double> f(n, 0.0);
    const Matrix& ai = b.inverse[layer];
    for (std::size_t r = 0; r < n; ++r) {
      double v = 0.0;
      for (std::size_t c = 0; c < n; ++c) v += ai(r, c) * pre[c];
      f[r] = v;
      inv.mean[r] += v;
    }
    inv.per_layer.push_back(std::move(f));
  }
  for (double& v : inv.mean) v /= static_cast<double>(codes.size());
  for (const auto& f : inv.per_layer)
    for (std::size_t r = 0; r < n; ++r)
      inv.max_disagreement = std::max(inv.max_disagreement, std::abs(f[r] - inv.mean[r]));
  return inv;
}

MockBackbone SyntheticDataset::backbone() const {
  return make_backbone(config, backbone_seed(seed));
}

SyntheticDataset generate_dataset(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  return generate_dataset(cfg, seed, make_backbone(cfg, backbone_seed(seed)));
}

SyntheticDataset generate_dataset(const SyntheticConfig& cfg, std::uint64_t seed,
                                  const MockBackbone& backbone) {
  cfg.validate();
  if (backbone.dim() != cfg.dim || backbone.num_layers() != cfg.num_layers)
    throw DimensionError("generate_dataset: backbone shape does not match config");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  SyntheticDataset ds;
  ds.config = cfg;
  ds.seed = seed;
  const std::size_t total = cfg.num_identities * cfg.frames_per_identity;
  ds.truth.reserve(total);
  ds.stacks.reserve(total);
  std::vector<std::pair<int, int>> ids;
  for (std::size_t id = 0; id < cfg.num_identities; ++id) {
    std::vector<double> emb(cfg.identity_dim);
    for (double& v : emb) v = unit(rng);
    for (std::size_t fr = 0; fr < cfg.frames_per_identity; ++fr) {
      GroundTruthFactors f;
      f.identity_emb = emb;
      f.attrs.resize(cfg.num_attributes);
      for (std::size_t a = 0; a < cfg.num_attributes; ++a)
        f.attrs[a] = cfg.kind(a) == AttributeKind::Binary ? (coin(rng) ? 1.0 : -1.0) : unit(rng);
      f.nuisance.resize(cfg.nuisance_dim());
      for (double& v : f.nuisance) v = unit(rng);
      ds.truth.push_back(std::move(f));
      ids.emplace_back(static_cast<int>(id), static_cast<int>(fr));
    }
  }

  ds.attribute_stats.assign(cfg.num_attributes, AttributeStats{});
  for (std::size_t a = 0; a < cfg.num_attributes; ++a) {
    if (cfg.kind(a) == AttributeKind::Binary) continue;
    double mean = 0.0, sq = 0.0;
    for (const auto& f : ds.truth) mean += f.attrs[a];
    mean /= static_cast<double>(total);
    for (const auto& f : ds.truth) sq += (f.attrs[a] - mean) * (f.attrs[a] - mean);
    ds.attribute_stats[a] = {mean, std::sqrt(sq / static_cast<double>(total))};
  }

  for (std::size_t i = 0; i < total; ++i) {
    StyleStack st;
    st.identity_id = ids[i].first;
    st.frame_id = ids[i].second;
    st.codes = backbone_generate(backbone, ds.truth[i]);
    st.labels.resize(cfg.num_attributes);
    for (std::size_t a = 0; a < cfg.num_attributes; ++a) {
      st.labels[a] = label_to_mean(ds.truth[i].attrs[a], cfg.kind(a), ds.attribute_stats[a]);
      if (cfg.label_noise > 0.0) st.labels[a] += cfg.label_noise * unit(rng);
    }
    ds.stacks.push_back(std::move(st));
  }
  return ds;
}

// ---- serialization -----------------------------------------------------------

namespace {

json header_json(const SyntheticDataset& ds) {
  json stats = json::array();
  for (const auto& s : ds.attribute_stats) stats.push_back({{"mean", s.mean}, {"stddev", s.stddev}});
  return {{"format", kDatasetFormat},
          {"seed", ds.seed},
          {"config", to_json(ds.config)},
          {"attribute_stats", stats},
          {"num_records", ds.stacks.size()}};
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorruptFileError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  if (lines.empty()) throw CorruptFileError(path.string() + ": empty file");
  return lines;
}

json parse_line(const std::string& line, const std::filesystem::path& path, std::size_t lineno) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw CorruptFileError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

std::string dataset_header_line(const SyntheticDataset& ds) { return header_json(ds).dump(); }

void save_dataset(const SyntheticDataset& ds, const std::filesystem::path& path) {
  std::vector<std::string> lines{dataset_header_line(ds)};
  for (const auto& st : ds.stacks) {
    lines.push_back(json{{"identity_id", st.identity_id},
                         {"frame_id", st.frame_id},
                         {"labels", st.labels},
                         {"codes", st.codes}}
                        .dump());
  }
  write_lines(path, lines);
}

void save_truth(const SyntheticDataset& ds, const std::filesystem::path& path) {
  if (ds.truth.size() != ds.stacks.size()) throw std::logic_error("dataset has no ground truth");
  std::vector<std::string> lines{
      json{{"format", kTruthFormat}, {"seed", ds.seed}, {"num_records", ds.truth.size()}}.dump()};
  for (std::size_t i = 0; i < ds.truth.size(); ++i) {
    const auto& f = ds.truth[i];
    lines.push_back(json{{"identity_id", ds.stacks[i].identity_id},
                         {"frame_id", ds.stacks[i].frame_id},
                         {"attrs", f.attrs},
                         {"identity_emb", f.identity_emb},
                         {"nuisance", f.nuisance}}
                        .dump());
  }
  write_lines(path, lines);
}

SyntheticDataset load_dataset(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  const json header = parse_line(lines[0], path, 1);
  if (!header.is_object() || !header.contains("format"))
    throw CorruptFileError(path.string() + ": missing dataset header");
  if (header["format"] != kDatasetFormat)
    throw VersionError(path.string() + ": unsupported dataset format " + header["format"].dump());
  SyntheticDataset ds;
  try {
    ds.seed = header.at("seed").get<std::uint64_t>();
    ds.config = synthetic_config_from_json(header.at("config"));
    for (const auto& s : header.at("attribute_stats"))
      ds.attribute_stats.push_back({s.at("mean").get<double>(), s.at("stddev").get<double>()});
    const auto expected = header.at("num_records").get<std::size_t>();
    if (expected != lines.size() - 1)
      throw CorruptFileError(path.string() + ": expected " + std::to_string(expected) +
                             " records, found " + std::to_string(lines.size() - 1));
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const json rec = parse_line(lines[i], path, i + 1);
      StyleStack st;
      st.identity_id = rec.at("identity_id").get<int>();
      st.frame_id = rec.at("frame_id").get<int>();
      st.labels = rec.at("labels").get<std::vector<double>>();
      st.codes = rec.at("codes").get<std::vector<std::vector<double>>>();
      try {
        st.validate(ds.config.num_layers, ds.config.dim, ds.config.num_attributes);
      } catch (const DimensionError& e) {
        throw ShapeError(path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
      }
      ds.stacks.push_back(std::move(st));
    }
  } catch (const json::exception& e) {
    throw CorruptFileError(path.string() + ": " + e.what());
  }
  return ds;
}

void load_truth(SyntheticDataset& ds, const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  const json header = parse_line(lines[0], path, 1);
  if (!header.is_object() || header.value("format", "") != kTruthFormat)
    throw VersionError(path.string() + ": not a " + std::string(kTruthFormat) + " file");
  if (lines.size() - 1 != ds.stacks.size())
    throw ShapeError(path.string() + ": record count does not match the dataset");
  ds.truth.clear();
  try {
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const json rec = parse_line(lines[i], path, i + 1);
      GroundTruthFactors f{rec.at("attrs").get<std::vector<double>>(),
                           rec.at("identity_emb").get<std::vector<double>>(),
                           rec.at("nuisance").get<std::vector<double>>()};
      if (f.flat().size() != ds.config.dim) throw ShapeError(path.string() + ": factor length");
      ds.truth.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw CorruptFileError(path.string() + ": " + e.what());
  }
}

std::uint64_t dataset_fingerprint(const SyntheticDataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dataset_header_line(ds)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

DatasetSplit split_by_identity(const SyntheticDataset& ds, double holdout_fraction) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
    throw ConfigError("holdout_fraction must be in [0, 1)");
  const auto ids = static_cast<double>(ds.config.num_identities);
  const int cutoff = static_cast<int>(std::lround(ids * (1.0 - holdout_fraction)));
  DatasetSplit split;
  for (std::size_t i = 0; i < ds.stacks.size(); ++i)
    (ds.stacks[i].identity_id < cutoff ? split.train : split.eval).push_back(i);
  return split;
}

std::vector<std::vector<std::size_t>> identity_index_groups(const std::vector<StyleStack>& stacks,
                                                            std::span<const std::size_t> subset) {
  std::map<int, std::size_t> slot;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t idx : subset) {
    const int id = stacks.at(idx).identity_id;
    auto [it, inserted] = slot.emplace(id, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(idx);
  }
  return groups;
}

}  // namespace flowplug
