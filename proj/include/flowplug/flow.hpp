#pragma once

// Conditional affine-coupling flow. The map to_latent sends a style code w,
// conditioned on its layer index, to a latent vector z = (c, s); to_style is
// its exact inverse. Every coupling splits the coordinates by parity: one half
// passes through unchanged and, together with the one-hot condition, feeds
// two MLPs that produce a log-scale and a shift for the other half.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "flowplug/matrix.hpp"
#include "flowplug/mlp.hpp"
#include "flowplug/prior.hpp"

namespace flowplug {

struct FlowConfig {
  std::size_t dim = 32;            // N
  std::size_t num_conditions = 4;  // k, number of style-code layers
  std::size_t num_couplings = 8;
  std::size_t hidden_width = 128;
  std::size_t hidden_layers = 2;
  double scale_clamp = 2.0;

  void validate() const;
  bool operator==(const FlowConfig&) const = default;
};

struct StyleCode {
  std::vector<double> w;
  std::size_t layer_index = 0;
};

struct CouplingLayer {
  int mask_parity = 0;  // coordinates with index % 2 == mask_parity pass through
  MlpParams scale_net;
  MlpParams shift_net;
  double scale_clamp = 2.0;
  std::vector<std::size_t> pass_idx;
  std::vector<std::size_t> trans_idx;

  bool operator==(const CouplingLayer&) const = default;
};

// Builds a coupling's coordinate split for the given parity.
void assign_mask(CouplingLayer& layer, std::size_t dim, int parity);

class FlowModel {
 public:
  FlowConfig config;
  PriorConfig prior;
  std::vector<CouplingLayer> layers;

  std::size_t dim() const { return config.dim; }
  std::size_t num_conditions() const { return config.num_conditions; }
  std::size_t parameter_count() const;

  // Shape and alternation checks; throws ShapeError.
  void validate() const;

  FlowModel zeros_like() const;

  bool operator==(const FlowModel&) const = default;
};

// Hidden layers random, final layers zero: the returned flow is the identity.
FlowModel make_flow(const FlowConfig& cfg, const PriorConfig& prior, std::uint64_t seed);

void for_each_block(FlowModel& m, const std::function<void(std::span<double>)>& fn);
void for_each_block(const FlowModel& m, const std::function<void(std::span<const double>)>& fn);
std::vector<double> flatten_params(const FlowModel& m);
void assign_params(FlowModel& m, std::span<const double> flat);

// ---- single-vector API -------------------------------------------------

struct CouplingOutput {
  std::vector<double> y;
  double logdet = 0.0;
};

// cond is a one-hot vector of length k.
CouplingOutput coupling_forward(const CouplingLayer& layer, std::span<const double> x,
                                std::span<const double> cond);
std::vector<double> coupling_inverse(const CouplingLayer& layer, std::span<const double> y,
                                     std::span<const double> cond);

struct LatentResult {
  LatentPair pair;
  double logdet = 0.0;
};

LatentResult to_latent(const FlowModel& model, const StyleCode& code);
StyleCode to_style(const FlowModel& model, const LatentPair& pair, std::size_t layer_index);

// Inverse map that also reports log|det| of the inverse direction.
struct StyleResult {
  StyleCode code;
  double logdet = 0.0;
};
StyleResult to_style_with_logdet(const FlowModel& model, const LatentPair& pair,
                                 std::size_t layer_index);

// ---- batched API -------------------------------------------------------
// Rows of the input matrices are independent codes; cond[r] is the layer
// index of row r.

struct CouplingCache {
  Matrix x;
  Matrix s_tilde;  // clamped log-scales
  Matrix scale_tanh;
  MlpCache scale_cache;
  MlpCache shift_cache;
};

struct FlowCache {
  std::vector<CouplingCache> layers;
};

struct FlowBatch {
  Matrix z;
  std::vector<double> logdet;
};

FlowBatch flow_forward(const FlowModel& model, const Matrix& w, std::span<const std::size_t> cond,
                       FlowCache* cache = nullptr);

// If logdet is non-null it receives log|det| of the inverse map per row.
Matrix flow_inverse(const FlowModel& model, const Matrix& z, std::span<const std::size_t> cond,
                    std::vector<double>* logdet = nullptr);

// Accumulates parameter gradients into grad and returns dL/dw.
Matrix flow_backward(const FlowModel& model, const FlowCache& cache, const Matrix& d_z,
                     std::span<const double> d_logdet, FlowModel& grad);

}  // namespace flowplug

namespace flowplug {

// Adds N(0, scale^2) noise to every parameter. Moves a freshly built
// (identity) flow to a generic invertible map for testing.
void perturb_params(FlowModel& m, std::uint64_t seed, double scale);

}  // namespace flowplug
