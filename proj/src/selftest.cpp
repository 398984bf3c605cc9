#include "flowplug/selftest.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "flowplug/evaluation.hpp"
#include "flowplug/flow.hpp"
#include "flowplug/losses.hpp"
#include "flowplug/synthetic.hpp"

namespace flowplug {

namespace {

std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

FlowModel small_flow(std::size_t dim, std::size_t k, std::size_t couplings, std::uint64_t seed) {
  FlowConfig fc;
  fc.dim = dim;
  fc.num_conditions = k;
  fc.num_couplings = couplings;
  fc.hidden_width = 8;
  fc.hidden_layers = 2;
  FlowModel m = make_flow(fc, PriorConfig{2, dim, 0.5}, seed);
  perturb_params(m, seed + 1, 0.3);
  return m;
}

bool flow_round_trip(std::string& detail) {
  const FlowModel m = small_flow(8, 3, 4, 11);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    StyleCode c{std::vector<double>(8), static_cast<std::size_t>(t % 3)};
    for (double& v : c.w) v = 2.0 * unit(rng);
    const auto lat = to_latent(m, c);
    const auto back = to_style(m, lat.pair, c.layer_index);
    for (std::size_t i = 0; i < 8; ++i)
      worst = std::max(worst, std::abs(back.w[i] - c.w[i]) / std::max(1.0, std::abs(c.w[i])));
  }
  detail = "max relative round-trip error " + sci(worst);
  return worst <= 1e-6;
}

bool flow_logdet(std::string& detail) {
  const FlowModel m = small_flow(6, 2, 4, 21);
  const StyleCode c{{0.3, -1.2, 0.8, 0.1, -0.5, 1.7}, 1};
  const double h = 1e-5;
  Eigen::MatrixXd jac(6, 6);
  for (std::size_t j = 0; j < 6; ++j) {
    StyleCode p = c, q = c;
    p.w[j] += h;
    q.w[j] -= h;
    const auto zp = to_latent(m, p).pair.joined();
    const auto zq = to_latent(m, q).pair.joined();
    for (std::size_t i = 0; i < 6; ++i)
      jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (zp[i] - zq[i]) / (2 * h);
  }
  const double fd = std::log(std::abs(jac.determinant()));
  const double exact = to_latent(m, c).logdet;
  detail = "logdet " + std::to_string(exact) + " vs finite differences " + std::to_string(fd);
  return std::abs(fd - exact) <= 1e-4;
}

bool gradient_check(std::string& detail) {
  FlowModel m = small_flow(6, 2, 2, 31);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<StyleStack> stacks(5);
  for (std::size_t s = 0; s < stacks.size(); ++s) {
    stacks[s].identity_id = s < 3 ? 0 : 1;
    stacks[s].codes.assign(2, std::vector<double>(6));
    for (auto& c : stacks[s].codes)
      for (double& v : c) v = unit(rng);
    stacks[s].labels = {s % 2 ? 1.0 : -1.0, 1.0};
  }
  std::vector<IdentityGroup> batch{{0, {&stacks[0], &stacks[1], &stacks[2]}},
                                   {1, {&stacks[3], &stacks[4]}}};
  LossConfig lc;
  lc.prior = m.prior;
  FlowModel grad = m.zeros_like();
  total_loss_and_gradient(m, batch, lc, grad);
  const auto g = flatten_params(grad);
  auto params = flatten_params(m);
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    assign_params(m, params);
    const double up = total_loss(m, batch, lc).total;
    params[i] = keep - h;
    assign_params(m, params);
    const double down = total_loss(m, batch, lc).total;
    params[i] = keep;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-3}));
  }
  assign_params(m, params);
  detail = std::to_string(params.size()) + " parameters, max relative error " + sci(worst);
  return worst <= 1e-4;
}

bool contrastive_identity(std::string& detail) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + static_cast<std::size_t>(t % 10);
    const std::size_t d = 1 + static_cast<std::size_t>((t * 7) % 16);
    std::vector<std::vector<double>> s(n, std::vector<double>(d));
    for (auto& v : s)
      for (double& x : v) x = unit(rng);
    double pairwise = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j)
          for (std::size_t c = 0; c < d; ++c) pairwise += (s[i][c] - s[j][c]) * (s[i][c] - s[j][c]);
    worst = std::max(worst, std::abs(pairwise - contrastive_loss(s)));
  }
  detail = "max |pairwise - mean form| " + sci(worst);
  return worst <= 1e-9;
}

bool spearman_oracle(std::string& detail) {
  double worst = 0.0;
  for (std::size_t n = 2; n <= 6; ++n) {
    std::vector<double> base(n), perm(n);
    std::iota(base.begin(), base.end(), 1.0);
    perm = base;
    do {
      const double mean = (static_cast<double>(n) + 1) / 2;
      double sab = 0, saa = 0, sbb = 0;
      for (std::size_t i = 0; i < n; ++i) {
        sab += (base[i] - mean) * (perm[i] - mean);
        saa += (base[i] - mean) * (base[i] - mean);
        sbb += (perm[i] - mean) * (perm[i] - mean);
      }
      worst = std::max(worst, std::abs(sab / std::sqrt(saa * sbb) - spearman_rho(base, perm)));
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  const std::vector<double> a{3.1, 0.2, 7.7};
  const bool identical = spearman_rho(a, a) == 1.0;
  detail = "max deviation from Pearson-on-ranks " + sci(worst);
  return worst <= 1e-12 && identical;
}

bool backbone_round_trip(std::string& detail) {
  SyntheticConfig cfg;
  cfg.dim = 12;
  cfg.identity_dim = 4;
  cfg.num_layers = 3;
  const MockBackbone b = make_backbone(cfg, 17);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> f(cfg.dim);
    for (double& v : f) v = 2.0 * unit(rng);
    const auto inv = backbone_invert(b, backbone_generate(b, f));
    for (std::size_t i = 0; i < f.size(); ++i) worst = std::max(worst, std::abs(inv.mean[i] - f[i]));
    worst = std::max(worst, inv.max_disagreement);
  }
  detail = "max inversion error " + sci(worst);
  return worst <= 1e-6;
}

}  // namespace

std::vector<SelftestCase> selftest_cases() {
  return {{"flow round trip", flow_round_trip},
          {"flow log-determinant", flow_logdet},
          {"loss gradient vs finite differences", gradient_check},
          {"contrastive pairwise identity", contrastive_identity},
          {"spearman vs pearson-on-ranks", spearman_oracle},
          {"backbone inversion", backbone_round_trip}};
}

bool run_selftest(std::ostream& out) {
  bool all = true;
  for (const auto& c : selftest_cases()) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("threw: ") + e.what();
    }
    all = all && ok;
    out << (ok ? "PASS " : "FAIL ") << c.name << " (" << detail << ")\n";
  }
  return all;
}

}  // namespace flowplug
