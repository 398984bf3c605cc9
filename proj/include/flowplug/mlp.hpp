#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "flowplug/matrix.hpp"

namespace flowplug {

enum class Activation { Linear, LeakyRelu };

inline constexpr double kLeakySlope = 0.01;

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// One affine layer y = x * weight + bias. weight is (in x out) so a batch of
// row vectors multiplies from the left.
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;
  Activation activation = Activation::Linear;

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
  bool operator==(const DenseLayer&) const = default;
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
  std::size_t parameter_count() const;

  // Throws DimensionError if consecutive layers do not chain, NumericError if
  // any entry is non-finite.
  void validate() const;

  // Same shapes, every entry zero. Used as a gradient accumulator.
  MlpParams zeros_like() const;

  bool operator==(const MlpParams&) const = default;
};

// Hidden layers use leaky-ReLU, the output layer is linear. Hidden weights get
// He-style Gaussian init; when zero_output is set the last layer starts at 0.
MlpParams make_mlp(std::span<const std::size_t> widths, std::mt19937_64& rng, bool zero_output);

// Visits every parameter array (weights then bias, layer by layer) in a fixed
// order. Flattening, Adam and serialization all rely on this order.
void for_each_block(MlpParams& p, const std::function<void(std::span<double>)>& fn);
void for_each_block(const MlpParams& p, const std::function<void(std::span<const double>)>& fn);

std::vector<double> mlp_apply(const MlpParams& params, std::span<const double> input);

// Activations kept from a batched forward pass for the backward pass.
struct MlpCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
};

// Batched forward: rows of x are samples.
Matrix mlp_forward(const MlpParams& params, const Matrix& x, MlpCache* cache = nullptr);

// Given dL/d(output), accumulates parameter gradients into grad (same shape
// as params) and returns dL/d(input).
Matrix mlp_backward(const MlpParams& params, const MlpCache& cache, const Matrix& d_out,
                    MlpParams& grad);

}  // namespace flowplug
