#pragma once

// Small fixtures shared by the unit tests.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "flowplug/flow.hpp"
#include "flowplug/stack.hpp"
#include "flowplug/synthetic.hpp"

namespace flowplug::testing {

inline std::vector<double> gaussian_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

inline std::vector<double> one_hot(std::size_t k, std::size_t i) {
  std::vector<double> v(k, 0.0);
  v[i] = 1.0;
  return v;
}

// Random stack with +-1 labels.
inline StyleStack random_stack(std::size_t k, std::size_t n, std::size_t m, std::mt19937_64& rng,
                               int identity = 0, int frame = 0) {
  StyleStack st;
  for (std::size_t l = 0; l < k; ++l) st.codes.push_back(gaussian_vector(n, rng));
  std::bernoulli_distribution coin(0.5);
  for (std::size_t a = 0; a < m; ++a) st.labels.push_back(coin(rng) ? 1.0 : -1.0);
  st.identity_id = identity;
  st.frame_id = frame;
  return st;
}

// A generic (non-identity) flow: default shapes, every parameter perturbed.
inline FlowModel random_flow(std::size_t n, std::size_t k, std::size_t m, std::uint64_t seed,
                             std::size_t couplings = 4, std::size_t width = 16,
                             double scale = 0.1) {
  FlowConfig fc;
  fc.dim = n;
  fc.num_conditions = k;
  fc.num_couplings = couplings;
  fc.hidden_width = width;
  fc.hidden_layers = 2;
  PriorConfig pc{m, n, 0.5};
  FlowModel model = make_flow(fc, pc, seed);
  perturb_params(model, seed + 1, scale);
  return model;
}

inline SyntheticConfig small_data_config() {
  SyntheticConfig c;
  c.num_identities = 20;
  c.frames_per_identity = 6;
  c.num_attributes = 2;
  c.dim = 8;
  c.num_layers = 2;
  c.identity_dim = 4;
  return c;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("flowplug_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace flowplug::testing
