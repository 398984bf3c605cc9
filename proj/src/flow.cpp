#include "flowplug/flow.hpp"

#include <cmath>
#include <random>
#include <string>

#include "flowplug/errors.hpp"

namespace flowplug {

void FlowConfig::validate() const {
  if (dim < 2) throw ConfigError("flow: dim must be at least 2");
  if (num_conditions < 1) throw ConfigError("flow: need at least one condition");
  if (num_couplings < 2) throw ConfigError("flow: need at least two coupling layers");
  if (hidden_width < 1 || hidden_layers < 1) throw ConfigError("flow: empty coupling networks");
  if (!(scale_clamp > 0.0)) throw ConfigError("flow: scale_clamp must be positive");
}

void assign_mask(CouplingLayer& layer, std::size_t dim, int parity) {
  layer.mask_parity = parity;
  layer.pass_idx.clear();
  layer.trans_idx.clear();
  for (std::size_t i = 0; i < dim; ++i)
    (static_cast<int>(i % 2) == parity ? layer.pass_idx : layer.trans_idx).push_back(i);
}

std::size_t FlowModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.scale_net.parameter_count() + l.shift_net.parameter_count();
  return n;
}

void FlowModel::validate() const {
  if (layers.size() < 2) throw ShapeError("flow: fewer than two coupling layers");
  std::vector<bool> covered(config.dim, false);
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& l = layers[li];
    const std::string where = "flow coupling " + std::to_string(li);
    if (l.pass_idx.size() + l.trans_idx.size() != config.dim)
      throw ShapeError(where + ": mask does not partition the coordinates");
    if (li > 0 && l.mask_parity == layers[li - 1].mask_parity)
      throw ShapeError(where + ": mask parity does not alternate");
    const std::size_t in = l.pass_idx.size() + config.num_conditions;
    for (const MlpParams* net : {&l.scale_net, &l.shift_net}) {
      if (net->layers.empty()) throw ShapeError(where + ": empty network");
      try {
        net->validate();
      } catch (const DimensionError& e) {
        throw ShapeError(where + ": " + e.what());
      }
      if (net->in_dim() != in || net->out_dim() != l.trans_idx.size())
        throw ShapeError(where + ": network shape does not match the mask");
    }
    for (std::size_t i : l.trans_idx) covered.at(i) = true;
  }
  for (bool c : covered)
    if (!c) throw ShapeError("flow: some coordinate is never transformed");
}

FlowModel FlowModel::zeros_like() const {
  FlowModel z = *this;
  for (auto& l : z.layers) {
    l.scale_net = l.scale_net.zeros_like();
    l.shift_net = l.shift_net.zeros_like();
  }
  return z;
}

FlowModel make_flow(const FlowConfig& cfg, const PriorConfig& prior, std::uint64_t seed) {
  cfg.validate();
  prior.validate();
  if (prior.dim != cfg.dim) throw ConfigError("flow and prior disagree on dimension");
  std::mt19937_64 rng(seed);
  FlowModel m;
  m.config = cfg;
  m.prior = prior;
  for (std::size_t i = 0; i < cfg.num_couplings; ++i) {
    CouplingLayer l;
    l.scale_clamp = cfg.scale_clamp;
    assign_mask(l, cfg.dim, static_cast<int>(i % 2));
    std::vector<std::size_t> widths{l.pass_idx.size() + cfg.num_conditions};
    for (std::size_t h = 0; h < cfg.hidden_layers; ++h) widths.push_back(cfg.hidden_width);
    widths.push_back(l.trans_idx.size());
    l.scale_net = make_mlp(widths, rng, true);
    l.shift_net = make_mlp(widths, rng, true);
    m.layers.push_back(std::move(l));
  }
  return m;
}

void for_each_block(FlowModel& m, const std::function<void(std::span<double>)>& fn) {
  for (auto& l : m.layers) {
    for_each_block(l.scale_net, fn);
    for_each_block(l.shift_net, fn);
  }
}

void for_each_block(const FlowModel& m, const std::function<void(std::span<const double>)>& fn) {
  for (const auto& l : m.layers) {
    for_each_block(l.scale_net, fn);
    for_each_block(l.shift_net, fn);
  }
}

std::vector<double> flatten_params(const FlowModel& m) {
  std::vector<double> flat;
  flat.reserve(m.parameter_count());
  for_each_block(m, [&](std::span<const double> b) { flat.insert(flat.end(), b.begin(), b.end()); });
  return flat;
}

void assign_params(FlowModel& m, std::span<const double> flat) {
  if (flat.size() != m.parameter_count())
    throw DimensionError("assign_params: expected " + std::to_string(m.parameter_count()) +
                         " values, got " + std::to_string(flat.size()));
  std::size_t off = 0;
  for_each_block(m, [&](std::span<double> b) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
              flat.begin() + static_cast<std::ptrdiff_t>(off + b.size()), b.begin());
    off += b.size();
  });
}

// ---- batched coupling primitives -------------------------------------------

namespace {

void check_cond(std::span<const std::size_t> cond, std::size_t rows, std::size_t k) {
  if (cond.size() != rows) throw DimensionError("flow: one condition per row required");
  for (std::size_t c : cond)
    if (c >= k)
      throw DimensionError("flow: layer index " + std::to_string(c) + " out of range [0, " +
                           std::to_string(k) + ")");
}

Matrix net_input(const CouplingLayer& layer, const Matrix& x, std::span<const std::size_t> cond,
                 std::size_t k) {
  const std::size_t p = layer.pass_idx.size();
  Matrix in(x.rows(), p + k);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t i = 0; i < p; ++i) in(r, i) = x(r, layer.pass_idx[i]);
    in(r, p + cond[r]) = 1.0;
  }
  return in;
}

struct ScaleShift {
  Matrix s_tilde;
  Matrix th;
  Matrix shift;
};

ScaleShift scale_shift(const CouplingLayer& layer, const Matrix& in, CouplingCache* cache) {
  Matrix raw = mlp_forward(layer.scale_net, in, cache ? &cache->scale_cache : nullptr);
  Matrix shift = mlp_forward(layer.shift_net, in, cache ? &cache->shift_cache : nullptr);
  const double clamp = layer.scale_clamp;
  Matrix th(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    th.values()[i] = std::tanh(raw.values()[i] / clamp);
    raw.values()[i] = clamp * th.values()[i];
  }
  return {std::move(raw), std::move(th), std::move(shift)};
}

Matrix coupling_forward_batch(const CouplingLayer& layer, const Matrix& x,
                              std::span<const std::size_t> cond, std::size_t k,
                              std::vector<double>& logdet, CouplingCache* cache) {
  const Matrix in = net_input(layer, x, cond, k);
  ScaleShift ss = scale_shift(layer, in, cache);
  Matrix y = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double ld = 0.0;
    for (std::size_t j = 0; j < layer.trans_idx.size(); ++j) {
      const std::size_t c = layer.trans_idx[j];
      const double st = ss.s_tilde(r, j);
      y(r, c) = x(r, c) * std::exp(st) + ss.shift(r, j);
      ld += st;
    }
    logdet[r] += ld;
  }
  if (!y.all_finite()) throw NumericError("coupling forward produced a non-finite value");
  if (cache) {
    cache->x = x;
    cache->s_tilde = std::move(ss.s_tilde);
    cache->scale_tanh = std::move(ss.th);
  }
  return y;
}

Matrix coupling_inverse_batch(const CouplingLayer& layer, const Matrix& y,
                              std::span<const std::size_t> cond, std::size_t k,
                              std::vector<double>* logdet) {
  const Matrix in = net_input(layer, y, cond, k);
  const ScaleShift ss = scale_shift(layer, in, nullptr);
  Matrix x = y;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double ld = 0.0;
    for (std::size_t j = 0; j < layer.trans_idx.size(); ++j) {
      const std::size_t c = layer.trans_idx[j];
      const double st = ss.s_tilde(r, j);
      x(r, c) = (y(r, c) - ss.shift(r, j)) * std::exp(-st);
      ld -= st;
    }
    if (logdet) (*logdet)[r] += ld;
  }
  if (!x.all_finite()) throw NumericError("coupling inverse produced a non-finite value");
  return x;
}

Matrix coupling_backward_batch(const CouplingLayer& layer, const CouplingCache& cache,
                               const Matrix& d_y, std::span<const double> d_logdet,
                               CouplingLayer& grad) {
  const std::size_t rows = d_y.rows();
  const std::size_t t = layer.trans_idx.size();
  Matrix d_x = d_y;
  Matrix d_raw(rows, t);
  Matrix d_shift(rows, t);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < t; ++j) {
      const std::size_t c = layer.trans_idx[j];
      const double e = std::exp(cache.s_tilde(r, j));
      const double dy = d_y(r, c);
      d_x(r, c) = dy * e;
      const double d_st = dy * cache.x(r, c) * e + d_logdet[r];
      const double th = cache.scale_tanh(r, j);
      d_raw(r, j) = d_st * (1.0 - th * th);
      d_shift(r, j) = dy;
    }
  }
  const Matrix d_in_scale = mlp_backward(layer.scale_net, cache.scale_cache, d_raw, grad.scale_net);
  const Matrix d_in_shift = mlp_backward(layer.shift_net, cache.shift_cache, d_shift, grad.shift_net);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < layer.pass_idx.size(); ++i)
      d_x(r, layer.pass_idx[i]) += d_in_scale(r, i) + d_in_shift(r, i);
  return d_x;
}

std::size_t one_hot_index(std::span<const double> cond) {
  std::size_t hot = cond.size();
  for (std::size_t i = 0; i < cond.size(); ++i) {
    if (cond[i] == 1.0 && hot == cond.size()) {
      hot = i;
    } else if (cond[i] != 0.0) {
      throw DimensionError("coupling condition is not a one-hot vector");
    }
  }
  if (hot == cond.size()) throw DimensionError("coupling condition is not a one-hot vector");
  return hot;
}

void check_width(const Matrix& m, std::size_t dim, const char* what) {
  if (m.cols() != dim)
    throw DimensionError(std::string(what) + ": expected width " + std::to_string(dim) +
                         ", got " + std::to_string(m.cols()));
}

}  // namespace

// ---- single-vector API -------------------------------------------------------

CouplingOutput coupling_forward(const CouplingLayer& layer, std::span<const double> x,
                                std::span<const double> cond) {
  const std::size_t dim = layer.pass_idx.size() + layer.trans_idx.size();
  if (x.size() != dim) throw DimensionError("coupling_forward: input length mismatch");
  const std::size_t idx = one_hot_index(cond);
  Matrix xm(1, dim, {x.begin(), x.end()});
  std::vector<double> ld(1, 0.0);
  Matrix y = coupling_forward_batch(layer, xm, std::span(&idx, 1), cond.size(), ld, nullptr);
  return {{y.values().begin(), y.values().end()}, ld[0]};
}

std::vector<double> coupling_inverse(const CouplingLayer& layer, std::span<const double> y,
                                     std::span<const double> cond) {
  const std::size_t dim = layer.pass_idx.size() + layer.trans_idx.size();
  if (y.size() != dim) throw DimensionError("coupling_inverse: input length mismatch");
  const std::size_t idx = one_hot_index(cond);
  Matrix ym(1, dim, {y.begin(), y.end()});
  Matrix x = coupling_inverse_batch(layer, ym, std::span(&idx, 1), cond.size(), nullptr);
  return {x.values().begin(), x.values().end()};
}

LatentResult to_latent(const FlowModel& model, const StyleCode& code) {
  if (code.w.size() != model.dim()) throw DimensionError("to_latent: code length mismatch");
  Matrix w(1, code.w.size(), code.w);
  const FlowBatch out = flow_forward(model, w, std::span(&code.layer_index, 1));
  return {LatentPair::split(out.z.row(0), model.prior.num_attributes), out.logdet[0]};
}

StyleResult to_style_with_logdet(const FlowModel& model, const LatentPair& pair,
                                 std::size_t layer_index) {
  const auto z = pair.joined();
  if (z.size() != model.dim()) throw DimensionError("to_style: latent length mismatch");
  Matrix zm(1, z.size(), z);
  std::vector<double> ld(1, 0.0);
  const Matrix w = flow_inverse(model, zm, std::span(&layer_index, 1), &ld);
  return {{{w.values().begin(), w.values().end()}, layer_index}, ld[0]};
}

StyleCode to_style(const FlowModel& model, const LatentPair& pair, std::size_t layer_index) {
  return to_style_with_logdet(model, pair, layer_index).code;
}

// ---- batched API -------------------------------------------------------------

FlowBatch flow_forward(const FlowModel& model, const Matrix& w, std::span<const std::size_t> cond,
                       FlowCache* cache) {
  check_width(w, model.dim(), "flow_forward");
  check_cond(cond, w.rows(), model.num_conditions());
  FlowBatch out{w, std::vector<double>(w.rows(), 0.0)};
  if (cache) cache->layers.assign(model.layers.size(), {});
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    out.z = coupling_forward_batch(model.layers[li], out.z, cond, model.num_conditions(),
                                   out.logdet, cache ? &cache->layers[li] : nullptr);
  }
  return out;
}

Matrix flow_inverse(const FlowModel& model, const Matrix& z, std::span<const std::size_t> cond,
                    std::vector<double>* logdet) {
  check_width(z, model.dim(), "flow_inverse");
  check_cond(cond, z.rows(), model.num_conditions());
  if (logdet) logdet->assign(z.rows(), 0.0);
  Matrix x = z;
  for (std::size_t li = model.layers.size(); li-- > 0;)
    x = coupling_inverse_batch(model.layers[li], x, cond, model.num_conditions(), logdet);
  return x;
}

Matrix flow_backward(const FlowModel& model, const FlowCache& cache, const Matrix& d_z,
                     std::span<const double> d_logdet, FlowModel& grad) {
  if (cache.layers.size() != model.layers.size())
    throw DimensionError("flow_backward: cache does not match model");
  if (d_logdet.size() != d_z.rows()) throw DimensionError("flow_backward: d_logdet length");
  Matrix d = d_z;
  for (std::size_t li = model.layers.size(); li-- > 0;)
    d = coupling_backward_batch(model.layers[li], cache.layers[li], d, d_logdet, grad.layers[li]);
  return d;
}

}  // namespace flowplug

namespace flowplug {

void perturb_params(FlowModel& m, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, scale);
  for_each_block(m, [&](std::span<double> b) {
    for (double& v : b) v += noise(rng);
  });
}

}  // namespace flowplug
