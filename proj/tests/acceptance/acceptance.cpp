// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Criteria 5-7 run the full gen-data -> train ->
// evaluate pipeline, so this binary takes several minutes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "flowplug/config.hpp"
#include "flowplug/evaluation.hpp"
#include "flowplug/flow.hpp"
#include "flowplug/losses.hpp"
#include "flowplug/pipeline.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace flowplug;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- shared pipeline runs ------------------------------------------------------

struct PipelineRun {
  TrainResult train;
  EvalReport report;
  fs::path dir;
};

class Runs {
 public:
  explicit Runs(fs::path root) : root_(std::move(root)) {}

  const PipelineRun& get(std::uint64_t seed, double lambda, const std::string& tag = "") {
    const std::string key = "seed" + std::to_string(seed) + "_lambda" + fmt(lambda) + tag;
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    RunConfig cfg;
    cfg.seed = seed;
    cfg.out_dir = root_ / key;
    cfg.train.loss.lambda_contrastive = lambda;
    cfg.train.eval_every = 0;
    cfg.finalize();
    fs::remove_all(cfg.out_dir);
    const auto start = std::chrono::steady_clock::now();
    run_gen_data(cfg);
    const auto paths = run_paths(cfg.out_dir);
    PipelineRun run;
    run.dir = cfg.out_dir;
    run.train = run_train(cfg, paths.dataset);
    run.report = run_evaluate(cfg, paths.dataset, paths.checkpoint);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "  [run " << key << ": " << fmt(secs, 4) << " s]" << std::endl;
    return cache_.emplace(key, std::move(run)).first->second;
  }

 private:
  fs::path root_;
  std::map<std::string, PipelineRun> cache_;
};

// ---- criterion 1: flow correctness ----------------------------------------------

double round_trip_error(const FlowModel& model, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> w(model.dim());
    for (double& v : w) v = nd(rng);
    double norm = 0.0;
    for (double v : w) norm = std::max(norm, std::abs(v));
    for (std::size_t l = 0; l < model.num_conditions(); ++l) {
      const auto back = to_style(model, to_latent(model, StyleCode{w, l}).pair, l).w;
      double err = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) err = std::max(err, std::abs(back[i] - w[i]));
      worst = std::max(worst, err / norm);
    }
  }
  return worst;
}

Outcome criterion1(Runs& runs) {
  FlowConfig fc;  // default architecture
  const FlowModel untrained = make_flow(fc, PriorConfig{}, 7);
  FlowModel perturbed = untrained;
  perturb_params(perturbed, 8, 0.02);
  const FlowModel& trained = runs.get(1, 1.0).train.checkpoint.model;
  // Codes at the scale of the default dataset's style codes.
  const double before = std::max(round_trip_error(untrained, 1, 5.0), round_trip_error(perturbed, 2, 5.0));
  const double after = round_trip_error(trained, 3, 5.0);

  FlowConfig small;
  small.dim = 6;
  small.num_conditions = 3;
  small.num_couplings = 6;
  small.hidden_width = 16;
  FlowModel m6 = make_flow(small, PriorConfig{2, 6, 0.5}, 11);
  perturb_params(m6, 12, 0.3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 1.0);
  double logdet_err = 0.0;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> w(6);
    for (double& v : w) v = nd(rng);
    const std::size_t l = static_cast<std::size_t>(t) % 3;
    const double exact = to_latent(m6, StyleCode{w, l}).logdet;
    const auto jac = testing::jacobian(
        [&](std::span<const double> x) { return to_latent(m6, StyleCode{{x.begin(), x.end()}, l}).pair.joined(); },
        w, 1e-5);
    logdet_err = std::max(logdet_err, std::abs(exact - testing::log_abs_det(jac, 6)));
  }
  Outcome o;
  o.pass = before <= 1e-6 && after <= 1e-6 && logdet_err <= 1e-4;
  o.detail = "round trip max rel err untrained " + sci(before) + ", trained " + sci(after) +
             " (tol 1e-6); logdet vs FD Jacobian max err " + sci(logdet_err) + " (tol 1e-4)";
  return o;
}

// ---- criterion 2: gradient correctness ------------------------------------------

Outcome criterion2() {
  FlowConfig fc;
  fc.dim = 6;
  fc.num_conditions = 2;
  fc.num_couplings = 2;
  fc.hidden_width = 8;
  FlowModel model = make_flow(fc, PriorConfig{2, 6, 0.5}, 21);
  perturb_params(model, 22, 0.3);
  std::mt19937_64 rng(23);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<StyleStack> stacks;
  for (int i = 0; i < 9; ++i) {
    StyleStack st;
    for (int l = 0; l < 2; ++l) {
      std::vector<double> w(6);
      for (double& v : w) v = nd(rng);
      st.codes.push_back(w);
    }
    st.labels = {i % 2 ? 1.0 : -1.0, i % 3 ? 1.0 : -1.0};
    st.identity_id = i / 4;  // groups of 4, 4 and 1 frames
    stacks.push_back(st);
  }
  std::vector<IdentityGroup> groups(3);
  for (int i = 0; i < 9; ++i) {
    groups[static_cast<std::size_t>(i / 4)].identity_id = i / 4;
    groups[static_cast<std::size_t>(i / 4)].frames.push_back(&stacks[static_cast<std::size_t>(i)]);
  }
  LossConfig lc;
  lc.lambda_contrastive = 1.0;
  lc.prior = model.prior;
  FlowModel grad = model.zeros_like();
  total_loss_and_gradient(model, groups, lc, grad);
  const auto analytic = flatten_params(grad);
  const auto numeric = testing::central_differences(
      [&](std::span<const double> p) {
        FlowModel m = model;
        assign_params(m, p);
        return total_loss(m, groups, lc).total;
      },
      flatten_params(model), 1e-5);
  const double err = testing::max_relative_error(analytic, numeric);
  return {err <= 1e-4, std::to_string(analytic.size()) + " parameters, max relative error " + sci(err) +
                           " (tol 1e-4, |a-b| / max(|a|, |b|, 1e-3))"};
}

// ---- criterion 3: contrastive identity ------------------------------------------

Outcome criterion3() {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> nd(1, 10), dd(1, 16);
  std::normal_distribution<double> g(0.0, 2.0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = nd(rng), d = dd(rng);
    std::vector<std::vector<double>> s(n, std::vector<double>(d));
    for (auto& v : s)
      for (double& x : v) x = g(rng);
    const double pairwise = testing::pairwise_contrastive(s);
    worst = std::max(worst, std::abs(contrastive_loss(s) - pairwise) / std::max(1.0, pairwise));
  }
  return {worst <= 1e-9, "1000 random groups (n <= 10, dim <= 16), max rel deviation " + sci(worst) +
                             " (tol 1e-9)"};
}

// ---- criterion 4: Spearman oracle -----------------------------------------------

Outcome criterion4() {
  double worst = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 2; n <= 7; ++n) {
    std::vector<double> base(n);
    std::iota(base.begin(), base.end(), 1.0);
    auto perm = base;
    do {
      worst = std::max(worst, std::abs(spearman_rho(base, perm) - testing::pearson_on_ranks(base, perm)));
      ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  const std::vector<double> a{3.1, 0.2, 7.7};
  const double identical = spearman_rho(a, a);
  return {worst <= 1e-12 && identical == 1.0,
          std::to_string(count) + " permutations, max deviation " + sci(worst) +
              " (tol 1e-12); identical rankings rho = " + fmt(identical)};
}

// ---- criterion 5: end-to-end training -------------------------------------------

Outcome criterion5(Runs& runs) {
  const auto& run = runs.get(1, 1.0);
  const double initial = run.train.trace.front().total;
  const double final_loss = run.train.trace.back().total;
  const auto& acc = run.report.probe_heldout_accuracy;
  const double min_probe = *std::min_element(acc.begin(), acc.end());
  const double modification = run.report.mean_modification();
  Outcome o;
  o.pass = final_loss < 0.5 * initial && min_probe >= 95.0 && modification >= 90.0;
  o.detail = "loss " + fmt(initial, 5) + " -> " + fmt(final_loss, 5) + " (ratio " +
             fmt(final_loss / initial) + ", need < 0.5); probe held-out min " + fmt(min_probe, 4) +
             "% (need >= 95); modification " + fmt(modification, 4) + "% (need >= 90)";
  return o;
}

// ---- criterion 6: directional comparisons ---------------------------------------

Outcome criterion6(Runs& runs) {
  int retention_wins = 0, spearman_wins = 0, drift_wins = 0;
  std::ostringstream per_seed;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto& with = runs.get(seed, 1.0).report;
    const auto& without = runs.get(seed, 0.0).report;
    retention_wins += with.mean_retention() >= without.mean_retention();
    spearman_wins += with.mean_spearman() >= without.mean_spearman();
    drift_wins += with.mean_identity_drift() <= without.mean_identity_drift();
    per_seed << " seed " << seed << ": retention " << fmt(with.mean_retention(), 4) << " vs "
             << fmt(without.mean_retention(), 4) << ", spearman " << fmt(with.mean_spearman(), 4)
             << " vs " << fmt(without.mean_spearman(), 4) << ", drift "
             << fmt(with.mean_identity_drift(), 4) << " vs " << fmt(without.mean_identity_drift(), 4)
             << ';';
  }
  Outcome o;
  o.pass = retention_wins >= 2 && spearman_wins >= 2 && drift_wins >= 2;
  o.detail = "lambda=1 vs lambda=0 wins of 3 seeds: retention " + std::to_string(retention_wins) +
             ", spearman " + std::to_string(spearman_wins) + ", identity drift " +
             std::to_string(drift_wins) + " (need >= 2 each);" + per_seed.str();
  return o;
}

// ---- criterion 7: determinism ---------------------------------------------------

Outcome criterion7(Runs& runs) {
  const auto& a = runs.get(1, 1.0);
  const auto& b = runs.get(1, 1.0, "_rerun");
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::directory_iterator(a.dir / "report")) {
    const auto name = entry.path().filename();
    const auto other = b.dir / "report" / name;
    ++compared;
    const std::string x = read_file(entry.path()), y = read_file(other);
    if (x != y) differing.push_back(name.string());
  }
  for (const char* f : {"dataset.jsonl", "truth.jsonl", "checkpoint.json", "loss.csv"}) {
    ++compared;
    if (read_file(a.dir / f) != read_file(b.dir / f)) differing.push_back(f);
  }
  Outcome o;
  o.pass = differing.empty() && compared >= 8;
  o.detail = std::to_string(compared) + " output files compared byte for byte, " +
             std::to_string(differing.size()) + " differ";
  for (const auto& d : differing) o.detail += " " + d;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path workdir = fs::temp_directory_path() / "flowplug_acceptance";
  for (int i = 1; i + 1 < argc; ++i)
    if (std::strcmp(argv[i], "--workdir") == 0) workdir = argv[i + 1];
  fs::create_directories(workdir);
  Runs runs(workdir);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria{
      {1, "flow correctness", [&] { return criterion1(runs); }},
      {2, "gradient correctness", [] { return criterion2(); }},
      {3, "contrastive pairwise identity", [] { return criterion3(); }},
      {4, "spearman oracle equivalence", [] { return criterion4(); }},
      {5, "end-to-end training", [&] { return criterion5(runs); }},
      {6, "lambda=1 vs lambda=0 directional comparisons", [&] { return criterion6(runs); }},
      {7, "pipeline determinism", [&] { return criterion7(runs); }},
  };

  bool all = true;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name
              << "): " << o.detail << std::endl;
  }
  return all ? 0 : 1;
}
