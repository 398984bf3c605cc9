#include "flowplug/mlp.hpp"

#include <cmath>

#include "flowplug/errors.hpp"
#include "flowplug/kernels.hpp"

namespace flowplug {

std::string to_string(Activation a) {
  return a == Activation::LeakyRelu ? "leaky_relu" : "linear";
}

Activation activation_from_string(const std::string& s) {
  if (s == "leaky_relu") return Activation::LeakyRelu;
  if (s == "linear") return Activation::Linear;
  throw ConfigError("unknown activation '" + s + "'");
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) throw DimensionError("mlp has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.size() != l.out_dim())
      throw DimensionError("mlp layer " + std::to_string(i) + ": bias length mismatch");
    if (i + 1 < layers.size() && l.out_dim() != layers[i + 1].in_dim())
      throw DimensionError("mlp layers " + std::to_string(i) + " and " + std::to_string(i + 1) +
                           " do not chain");
    if (!l.weight.all_finite() || !all_finite(l.bias))
      throw NumericError("mlp layer " + std::to_string(i) + " has non-finite parameters");
  }
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z = *this;
  for (auto& l : z.layers) {
    l.weight.fill(0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  return z;
}

MlpParams make_mlp(std::span<const std::size_t> widths, std::mt19937_64& rng, bool zero_output) {
  if (widths.size() < 2) throw DimensionError("mlp needs at least input and output widths");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    DenseLayer l{Matrix(widths[i], widths[i + 1]), std::vector<double>(widths[i + 1], 0.0),
                 last ? Activation::Linear : Activation::LeakyRelu};
    if (!(last && zero_output)) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(widths[i])));
      for (double& w : l.weight.values()) w = dist(rng);
    }
    p.layers.push_back(std::move(l));
  }
  return p;
}

void for_each_block(MlpParams& p, const std::function<void(std::span<double>)>& fn) {
  for (auto& l : p.layers) {
    fn(l.weight.values());
    fn(l.bias);
  }
}

void for_each_block(const MlpParams& p, const std::function<void(std::span<const double>)>& fn) {
  for (const auto& l : p.layers) {
    fn(l.weight.values());
    fn(l.bias);
  }
}

namespace {

inline double activate(Activation a, double x) {
  return (a == Activation::LeakyRelu && x < 0.0) ? kLeakySlope * x : x;
}

inline double activate_grad(Activation a, double x) {
  return (a == Activation::LeakyRelu && x < 0.0) ? kLeakySlope : 1.0;
}

}  // namespace

std::vector<double> mlp_apply(const MlpParams& params, std::span<const double> input) {
  if (params.layers.empty()) throw DimensionError("mlp has no layers");
  if (input.size() != params.in_dim())
    throw DimensionError("mlp_apply: input length " + std::to_string(input.size()) +
                         " != " + std::to_string(params.in_dim()));
  Matrix x(1, input.size(), std::vector<double>(input.begin(), input.end()));
  Matrix y = mlp_forward(params, x);
  return {y.values().begin(), y.values().end()};
}

Matrix mlp_forward(const MlpParams& params, const Matrix& x, MlpCache* cache) {
  if (params.layers.empty()) throw DimensionError("mlp has no layers");
  if (x.cols() != params.in_dim())
    throw DimensionError("mlp_forward: input width " + std::to_string(x.cols()) +
                         " != " + std::to_string(params.in_dim()));
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Matrix h = x;
  for (const auto& l : params.layers) {
    Matrix z;
    kernels::matmul(h, l.weight, z);
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto row = z.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += l.bias[c];
    }
    Matrix out = z;
    if (l.activation != Activation::Linear)
      for (double& v : out.values()) v = activate(l.activation, v);
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(std::move(z));
    }
    h = std::move(out);
  }
  return h;
}

Matrix mlp_backward(const MlpParams& params, const MlpCache& cache, const Matrix& d_out,
                    MlpParams& grad) {
  if (cache.inputs.size() != params.layers.size())
    throw DimensionError("mlp_backward: cache does not match parameters");
  Matrix delta = d_out;
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& l = params.layers[li];
    auto& g = grad.layers[li];
    if (l.activation != Activation::Linear) {
      const auto& pre = cache.pre[li];
      for (std::size_t i = 0; i < delta.size(); ++i)
        delta.values()[i] *= activate_grad(l.activation, pre.values()[i]);
    }
    kernels::matmul_tn_acc(cache.inputs[li], delta, g.weight);
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      auto row = delta.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) g.bias[c] += row[c];
    }
    Matrix d_in;
    kernels::matmul_nt(delta, l.weight, d_in);
    delta = std::move(d_in);
  }
  return delta;
}

}  // namespace flowplug
