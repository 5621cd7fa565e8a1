#include <benchmark/benchmark.h>

#include "gpool/harness.hpp"
#include "gpool/kernels.hpp"

using namespace gpool;

namespace {

template <Matrix (*Kernel)(const Matrix&, const Matrix&)>
void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  DeterministicRng rng(1);
  const Matrix a = uniform_matrix(n, n, 1.0, rng), b = uniform_matrix(n, n, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

void BM_train_epoch(benchmark::State& state) {
  SyntheticTaskSpec spec;
  spec.n_examples = 200;
  const auto data = generate_dataset(spec, 1);
  RunConfig c;
  c.op = PoolOperator::vn;
  c.encoder = EncoderKind::sgformer;
  c.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train_seed(c, data, 1, {.parallel = state.range(0) != 0}));
}

}  // namespace

BENCHMARK(BM_matmul<kernels::matmul_serial>)->Name("matmul/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_matmul<kernels::matmul_omp>)->Name("matmul/omp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_matmul<kernels::matmul_tn_serial>)->Name("matmul_tn/serial")->Arg(128)->Arg(256);
BENCHMARK(BM_matmul<kernels::matmul_tn_omp>)->Name("matmul_tn/omp")->Arg(128)->Arg(256);
BENCHMARK(BM_train_epoch)->Name("train_epoch/serial")->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_train_epoch)->Name("train_epoch/omp")->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
