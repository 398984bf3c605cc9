#pragma once

#include <random>
#include <span>
#include <vector>

namespace flowplug {

// Factorized conditional prior over the latent space: attribute coordinate i
// is N(y_i, sigma^2), the remaining N - M coordinates are standard normal.
struct PriorConfig {
  std::size_t num_attributes = 4;  // M
  std::size_t dim = 32;            // N
  double sigma = 0.5;

  void validate() const;
  bool operator==(const PriorConfig&) const = default;
};

using LabelVector = std::vector<double>;

// Attribute vector c (length M) and non-attribute vector s (length N - M).
struct LatentPair {
  std::vector<double> c;
  std::vector<double> s;

  std::vector<double> joined() const;
  static LatentPair split(std::span<const double> z, std::size_t num_attributes);
  bool operator==(const LatentPair&) const = default;
};

double log_prior(const LatentPair& pair, std::span<const double> y, const PriorConfig& cfg);

// Same density evaluated on a joined latent vector z = (c, s).
double log_prior_joined(std::span<const double> z, std::span<const double> y,
                        const PriorConfig& cfg);

LatentPair sample_latent(std::span<const double> y, const PriorConfig& cfg, std::mt19937_64& rng);

enum class AttributeKind { Binary, Continuous };

struct AttributeStats {
  double mean = 0.0;
  double stddev = 1.0;

  bool operator==(const AttributeStats&) const = default;
};

// Binary raw labels map to -1/+1 (raw > 0 is the positive class); continuous
// labels are standardized with the training-set statistics.
double label_to_mean(double raw, AttributeKind kind, const AttributeStats& stats = {});

}  // namespace flowplug
