#include "flowplug/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "flowplug/adam.hpp"
#include "flowplug/errors.hpp"

namespace flowplug {

void ProbeConfig::validate() const {
  if (epochs < 1 || batch_size < 1) throw ConfigError("probe: epochs and batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("probe: lr must be positive");
}

namespace {

std::vector<double> raw_features(ProbeInput input, const StyleStack& stack) {
  if (stack.codes.empty()) throw DimensionError("probe: stack has no codes");
  const std::size_t n = stack.dim();
  if (input == ProbeInput::Flatten) {
    std::vector<double> f;
    f.reserve(n * stack.num_layers());
    for (const auto& c : stack.codes) f.insert(f.end(), c.begin(), c.end());
    return f;
  }
  std::vector<double> f(n, 0.0);
  for (const auto& c : stack.codes) {
    if (c.size() != n) throw DimensionError("probe: codes differ in length");
    for (std::size_t i = 0; i < n; ++i) f[i] += c[i];
  }
  for (double& v : f) v /= static_cast<double>(stack.num_layers());
  return f;
}

void check_labels(std::span<const StyleStack> stacks, std::size_t m) {
  for (std::size_t a = 0; a < m; ++a) {
    bool pos = false, neg = false;
    for (const auto& s : stacks) {
      if (s.labels.size() != m) throw DimensionError("probe: inconsistent label lengths");
      (s.labels[a] >= 0.0 ? pos : neg) = true;
    }
    if (!pos || !neg)
      throw ConfigError("probe: attribute " + std::to_string(a) +
                        " has a single class in the training data");
  }
}

}  // namespace

std::vector<double> ProbeModel::features(const StyleStack& stack) const {
  auto f = raw_features(input, stack);
  if (f.size() != feature_mean.size()) throw DimensionError("probe: feature width mismatch");
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = (f[i] - feature_mean[i]) / feature_scale[i];
  return f;
}

std::vector<double> ProbeModel::scores(const StyleStack& stack) const {
  return mlp_apply(net, features(stack));
}

Matrix ProbeModel::scores(std::span<const StyleStack> stacks) const {
  Matrix x(stacks.size(), feature_mean.size());
  for (std::size_t r = 0; r < stacks.size(); ++r) {
    const auto f = features(stacks[r]);
    std::copy(f.begin(), f.end(), x.row(r).begin());
  }
  return mlp_forward(net, x);
}

double probe_confidence(double score, int direction) {
  const double pos = std::clamp(0.5 * (score + 1.0), 0.0, 1.0);
  return direction > 0 ? pos : 1.0 - pos;
}

ProbeModel train_probe(std::span<const StyleStack> train, std::span<const StyleStack> heldout,
                       const ProbeConfig& cfg) {
  cfg.validate();
  if (train.size() < 2) throw ConfigError("probe: need at least two training stacks");
  const std::size_t m = train.front().labels.size();
  if (m == 0) throw ConfigError("probe: stacks carry no labels");
  check_labels(train, m);

  ProbeModel probe;
  probe.input = cfg.input;
  const std::size_t width = raw_features(cfg.input, train.front()).size();
  Matrix x(train.size(), width);
  Matrix y(train.size(), m);
  for (std::size_t r = 0; r < train.size(); ++r) {
    const auto f = raw_features(cfg.input, train[r]);
    if (f.size() != width) throw DimensionError("probe: stacks differ in shape");
    std::copy(f.begin(), f.end(), x.row(r).begin());
    std::copy(train[r].labels.begin(), train[r].labels.end(), y.row(r).begin());
  }
  probe.feature_mean.assign(width, 0.0);
  probe.feature_scale.assign(width, 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c) probe.feature_mean[c] += x(r, c);
  for (double& v : probe.feature_mean) v /= static_cast<double>(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c) {
      const double d = x(r, c) - probe.feature_mean[c];
      probe.feature_scale[c] += d * d;
    }
  for (double& v : probe.feature_scale) {
    v = std::sqrt(v / static_cast<double>(x.rows()));
    if (!(v > 1e-12)) v = 1.0;
  }
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c)
      x(r, c) = (x(r, c) - probe.feature_mean[c]) / probe.feature_scale[c];

  std::mt19937_64 rng(cfg.seed ^ 0x70726F6265ULL);
  std::vector<std::size_t> widths{width};
  if (cfg.hidden_width > 0) widths.push_back(cfg.hidden_width);
  widths.push_back(m);
  probe.net = make_mlp(widths, rng, false);

  std::vector<double> params;
  for_each_block(std::as_const(probe.net), [&](std::span<const double> b) {
    params.insert(params.end(), b.begin(), b.end());
  });
  AdamState adam(params.size());
  const AdamHyper hyper{cfg.lr, 0.9, 0.999, 1e-8};

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t bsz = end - start;
      Matrix xb(bsz, width), yb(bsz, m);
      for (std::size_t i = 0; i < bsz; ++i) {
        std::copy(x.row(order[start + i]).begin(), x.row(order[start + i]).end(), xb.row(i).begin());
        std::copy(y.row(order[start + i]).begin(), y.row(order[start + i]).end(), yb.row(i).begin());
      }
      MlpCache cache;
      const Matrix pred = mlp_forward(probe.net, xb, &cache);
      Matrix d(bsz, m);
      const double scale = 2.0 / static_cast<double>(bsz * m);
      for (std::size_t i = 0; i < d.size(); ++i)
        d.values()[i] = scale * (pred.values()[i] - yb.values()[i]);
      MlpParams grad = probe.net.zeros_like();
      mlp_backward(probe.net, cache, d, grad);
      std::vector<double> g;
      g.reserve(params.size());
      for_each_block(std::as_const(grad), [&](std::span<const double> b) {
        g.insert(g.end(), b.begin(), b.end());
      });
      adam_step(params, g, adam, hyper);
      std::size_t off = 0;
      for_each_block(probe.net, [&](std::span<double> b) {
        std::copy(params.begin() + static_cast<std::ptrdiff_t>(off),
                  params.begin() + static_cast<std::ptrdiff_t>(off + b.size()), b.begin());
        off += b.size();
      });
    }
  }
  if (!heldout.empty()) probe.heldout_accuracy = probe_accuracy(probe, heldout);
  return probe;
}

std::vector<double> probe_accuracy(const ProbeModel& probe, std::span<const StyleStack> stacks) {
  const std::size_t m = probe.num_attributes();
  std::vector<double> acc(m, 0.0);
  if (stacks.empty()) return acc;
  const Matrix s = probe.scores(stacks);
  for (std::size_t r = 0; r < stacks.size(); ++r)
    for (std::size_t a = 0; a < m; ++a)
      if (probe_decision(s(r, a)) == probe_decision(stacks[r].labels.at(a))) acc[a] += 1.0;
  for (double& v : acc) v = 100.0 * v / static_cast<double>(stacks.size());
  return acc;
}

}  // namespace flowplug
