// Serial reference kernels vs their OpenMP counterparts, plus a whole
// flow forward/backward pass under each policy.

#include <benchmark/benchmark.h>

#include <random>

#include "flowplug/kernels.hpp"
#include "flowplug/losses.hpp"
#include "flowplug/synthetic.hpp"
#include "flowplug/training.hpp"

namespace {

using flowplug::Matrix;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.values()) v = unit(rng);
  return m;
}

template <void (*Fn)(const Matrix&, const Matrix&, Matrix&)>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(400, n, 1), b = random_matrix(n, n, 2);
  Matrix out;
  for (auto _ : state) {
    Fn(a, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(400 * n * n));
}

template <void (*Fn)(const Matrix&, const Matrix&, Matrix&)>
void BM_MatmulTn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(400, n, 1), b = random_matrix(400, n, 2);
  Matrix out(n, n);
  for (auto _ : state) {
    Fn(a, b, out);
    benchmark::DoNotOptimize(out.data());
  }
}

BENCHMARK_TEMPLATE(BM_Matmul, flowplug::kernels::serial::matmul)->Arg(32)->Arg(128);
BENCHMARK_TEMPLATE(BM_Matmul, flowplug::kernels::parallel::matmul)->Arg(32)->Arg(128);
BENCHMARK_TEMPLATE(BM_MatmulTn, flowplug::kernels::serial::matmul_tn_acc)->Arg(32)->Arg(128);
BENCHMARK_TEMPLATE(BM_MatmulTn, flowplug::kernels::parallel::matmul_tn_acc)->Arg(32)->Arg(128);

void BM_LossGradient(benchmark::State& state) {
  const auto policy = state.range(0) == 0 ? flowplug::kernels::Policy::Serial
                                          : flowplug::kernels::Policy::Parallel;
  flowplug::kernels::ScopedPolicy scoped(policy);
  flowplug::SyntheticConfig sc;
  sc.num_identities = 5;
  const auto ds = flowplug::generate_dataset(sc, 3);
  flowplug::TrainConfig tc;
  tc.loss.prior = {sc.num_attributes, sc.dim, 0.5};
  const auto batches = flowplug::make_batches(ds, tc, 1);
  const auto groups = flowplug::resolve_batch(ds.stacks, batches.front());
  flowplug::FlowConfig fc;
  auto model = flowplug::make_flow(fc, tc.loss.prior, 1);
  flowplug::perturb_params(model, 2, 0.05);
  for (auto _ : state) {
    auto grad = model.zeros_like();
    benchmark::DoNotOptimize(flowplug::total_loss_and_gradient(model, groups, tc.loss, grad));
  }
}
BENCHMARK(BM_LossGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
