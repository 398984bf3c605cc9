#include "flowplug/losses.hpp"

#include <cmath>
#include <string>

#include "flowplug/errors.hpp"

namespace flowplug {

void LossConfig::validate() const {
  if (!(lambda_contrastive >= 0.0) || !std::isfinite(lambda_contrastive))
    throw ConfigError("loss: lambda_contrastive must be a non-negative finite number");
  prior.validate();
}

double nll_loss(const FlowModel& model, const StyleStack& stack, const LossConfig& cfg) {
  stack.validate(model.num_conditions(), model.dim(), cfg.prior.num_attributes);
  std::vector<std::size_t> cond;
  const StyleStack* ptr = &stack;
  const Matrix w = stack_rows(std::span(&ptr, 1), &cond);
  const FlowBatch out = flow_forward(model, w, cond);
  double nll = 0.0;
  for (std::size_t r = 0; r < out.z.rows(); ++r)
    nll -= log_prior_joined(out.z.row(r), stack.labels, cfg.prior) + out.logdet[r];
  if (!std::isfinite(nll)) throw NumericError("nll_loss is not finite");
  return nll;
}

namespace {

double pair_normalizer(std::size_t n, bool normalize) {
  if (!normalize || n < 2) return 1.0;
  return 1.0 / (static_cast<double>(n) * static_cast<double>(n - 1));
}

}  // namespace

double contrastive_loss(std::span<const std::vector<double>> s_vectors, bool normalize) {
  if (s_vectors.empty()) throw DimensionError("contrastive_loss: empty identity group");
  const std::size_t n = s_vectors.size();
  const std::size_t d = s_vectors.front().size();
  std::vector<double> mean(d, 0.0);
  for (const auto& s : s_vectors) {
    if (s.size() != d) throw DimensionError("contrastive_loss: vectors differ in length");
    for (std::size_t j = 0; j < d; ++j) mean[j] += s[j];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  double spread = 0.0;
  for (const auto& s : s_vectors)
    for (std::size_t j = 0; j < d; ++j) spread += (s[j] - mean[j]) * (s[j] - mean[j]);
  return 2.0 * static_cast<double>(n) * spread * pair_normalizer(n, normalize);
}

namespace {

LossBreakdown evaluate_batch(const FlowModel& model, std::span<const IdentityGroup> batch,
                             const LossConfig& cfg, FlowModel* grad) {
  cfg.validate();
  if (batch.empty()) throw DimensionError("total_loss: empty batch");
  if (cfg.prior.dim != model.dim()) throw DimensionError("loss prior and flow disagree on N");

  std::vector<const StyleStack*> stacks;
  for (const auto& g : batch) {
    if (g.frames.empty()) throw DimensionError("total_loss: empty identity group");
    for (const auto* f : g.frames) {
      if (f->identity_id != g.identity_id)
        throw DimensionError("total_loss: frame identity does not match its group");
      f->validate(model.num_conditions(), model.dim(), cfg.prior.num_attributes);
      stacks.push_back(f);
    }
  }
  const std::size_t k = model.num_conditions();
  const std::size_t m = cfg.prior.num_attributes;
  const std::size_t n_dim = model.dim();
  const double var = cfg.prior.sigma * cfg.prior.sigma;

  std::vector<std::size_t> cond;
  const Matrix w = stack_rows(stacks, &cond);
  FlowCache cache;
  const FlowBatch out = flow_forward(model, w, cond, grad ? &cache : nullptr);

  LossBreakdown lb;
  lb.num_stacks = stacks.size();
  for (std::size_t s = 0; s < stacks.size(); ++s)
    for (std::size_t l = 0; l < k; ++l) {
      const std::size_t r = s * k + l;
      lb.sum_nll -= log_prior_joined(out.z.row(r), stacks[s]->labels, cfg.prior) + out.logdet[r];
    }

  // Contrastive terms, one per (group, layer). Rows of a group are contiguous.
  std::vector<std::vector<double>> svecs;
  std::size_t first = 0;
  std::vector<std::pair<std::size_t, std::size_t>> group_rows;  // (first stack, count)
  for (const auto& g : batch) {
    group_rows.emplace_back(first, g.frames.size());
    for (std::size_t l = 0; l < k; ++l) {
      svecs.clear();
      for (std::size_t f = 0; f < g.frames.size(); ++f) {
        const auto row = out.z.row((first + f) * k + l);
        svecs.emplace_back(row.begin() + static_cast<std::ptrdiff_t>(m), row.end());
      }
      lb.sum_contrastive += contrastive_loss(svecs, cfg.normalize_groups);
      lb.num_contrastive_terms += 1;
    }
    first += g.frames.size();
  }

  lb.mean_nll = lb.sum_nll / static_cast<double>(lb.num_stacks);
  lb.mean_contrastive = lb.sum_contrastive / static_cast<double>(lb.num_contrastive_terms);
  lb.total = lb.mean_nll + cfg.lambda_contrastive * lb.mean_contrastive;
  if (!std::isfinite(lb.total)) throw NumericError("total_loss is not finite");
  if (!grad) return lb;

  const double inv_stacks = 1.0 / static_cast<double>(lb.num_stacks);
  Matrix d_z(out.z.rows(), n_dim);
  std::vector<double> d_logdet(out.z.rows(), -inv_stacks);
  for (std::size_t s = 0; s < stacks.size(); ++s)
    for (std::size_t l = 0; l < k; ++l) {
      const std::size_t r = s * k + l;
      for (std::size_t j = 0; j < m; ++j)
        d_z(r, j) = inv_stacks * (out.z(r, j) - stacks[s]->labels[j]) / var;
      for (std::size_t j = m; j < n_dim; ++j) d_z(r, j) = inv_stacks * out.z(r, j);
    }

  if (cfg.lambda_contrastive > 0.0) {
    const double term_weight =
        cfg.lambda_contrastive / static_cast<double>(lb.num_contrastive_terms);
    std::vector<double> mean(n_dim - m);
    for (const auto& [g_first, n] : group_rows) {
      if (n < 2) continue;
      const double coef = term_weight * 4.0 * static_cast<double>(n) *
                          pair_normalizer(n, cfg.normalize_groups);
      for (std::size_t l = 0; l < k; ++l) {
        std::fill(mean.begin(), mean.end(), 0.0);
        for (std::size_t f = 0; f < n; ++f)
          for (std::size_t j = m; j < n_dim; ++j) mean[j - m] += out.z((g_first + f) * k + l, j);
        for (double& v : mean) v /= static_cast<double>(n);
        for (std::size_t f = 0; f < n; ++f) {
          const std::size_t r = (g_first + f) * k + l;
          for (std::size_t j = m; j < n_dim; ++j) d_z(r, j) += coef * (out.z(r, j) - mean[j - m]);
        }
      }
    }
  }

  flow_backward(model, cache, d_z, d_logdet, *grad);
  return lb;
}

}  // namespace

LossBreakdown total_loss(const FlowModel& model, std::span<const IdentityGroup> batch,
                         const LossConfig& cfg) {
  return evaluate_batch(model, batch, cfg, nullptr);
}

LossBreakdown total_loss_and_gradient(const FlowModel& model, std::span<const IdentityGroup> batch,
                                      const LossConfig& cfg, FlowModel& grad) {
  return evaluate_batch(model, batch, cfg, &grad);
}

}  // namespace flowplug
