#include "flowplug/prior.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "flowplug/errors.hpp"

namespace flowplug {

namespace {
const double kLogTwoPi = std::log(2.0 * std::numbers::pi);
}

void PriorConfig::validate() const {
  if (!(num_attributes > 0 && num_attributes < dim))
    throw ConfigError("prior: need 0 < M < N (M=" + std::to_string(num_attributes) +
                      ", N=" + std::to_string(dim) + ")");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("prior: sigma must be positive");
}

std::vector<double> LatentPair::joined() const {
  std::vector<double> z(c);
  z.insert(z.end(), s.begin(), s.end());
  return z;
}

LatentPair LatentPair::split(std::span<const double> z, std::size_t num_attributes) {
  if (num_attributes > z.size()) throw DimensionError("latent split: M exceeds vector length");
  return {{z.begin(), z.begin() + static_cast<std::ptrdiff_t>(num_attributes)},
          {z.begin() + static_cast<std::ptrdiff_t>(num_attributes), z.end()}};
}

double log_prior(const LatentPair& pair, std::span<const double> y, const PriorConfig& cfg) {
  if (pair.c.size() != cfg.num_attributes || pair.s.size() != cfg.dim - cfg.num_attributes)
    throw DimensionError("log_prior: latent pair does not match prior dimensions");
  return log_prior_joined(pair.joined(), y, cfg);
}

double log_prior_joined(std::span<const double> z, std::span<const double> y,
                        const PriorConfig& cfg) {
  if (z.size() != cfg.dim || y.size() != cfg.num_attributes)
    throw DimensionError("log_prior: expected latent of length " + std::to_string(cfg.dim) +
                         " and labels of length " + std::to_string(cfg.num_attributes));
  const std::size_t m = cfg.num_attributes;
  const double var = cfg.sigma * cfg.sigma;
  double quad_c = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = z[i] - y[i];
    quad_c += d * d;
  }
  double quad_s = 0.0;
  for (std::size_t i = m; i < z.size(); ++i) quad_s += z[i] * z[i];
  const double n = static_cast<double>(z.size());
  return -0.5 * n * kLogTwoPi - static_cast<double>(m) * std::log(cfg.sigma) -
         0.5 * quad_c / var - 0.5 * quad_s;
}

LatentPair sample_latent(std::span<const double> y, const PriorConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  if (y.size() != cfg.num_attributes) throw DimensionError("sample_latent: label length mismatch");
  std::normal_distribution<double> unit(0.0, 1.0);
  LatentPair p;
  p.c.resize(cfg.num_attributes);
  p.s.resize(cfg.dim - cfg.num_attributes);
  for (std::size_t i = 0; i < p.c.size(); ++i) p.c[i] = y[i] + cfg.sigma * unit(rng);
  for (double& v : p.s) v = unit(rng);
  return p;
}

double label_to_mean(double raw, AttributeKind kind, const AttributeStats& stats) {
  if (kind == AttributeKind::Binary) return raw > 0.0 ? 1.0 : -1.0;
  if (!(stats.stddev > 0.0))
    throw ConfigError("label_to_mean: continuous attribute has zero standard deviation");
  return (raw - stats.mean) / stats.stddev;
}

}  // namespace flowplug
