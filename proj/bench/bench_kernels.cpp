// Serial reference kernels against their OpenMP versions.
//
//   bench_kernels --benchmark_filter=Matmul
//   OMP_NUM_THREADS=4 bench_kernels

#include <benchmark/benchmark.h>

#include <random>

#include "vrepair/kernels.hpp"
#include "vrepair/micronet.hpp"
#include "vrepair/synthetic.hpp"
#include "vrepair/training.hpp"

using namespace vrepair;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = n(rng);
  return m;
}

template <void (*Kernel)(const Matrix&, const Matrix&, Matrix&, bool)>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  Matrix c(n, n);
  for (auto _ : state) {
    Kernel(a, b, c, false);
    benchmark::DoNotOptimize(c[0]);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <void (*Kernel)(Matrix&)>
void BM_Softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto src = random_matrix(n, n, 3);
  for (auto _ : state) {
    state.PauseTiming();
    Matrix m = src;
    state.ResumeTiming();
    Kernel(m);
    benchmark::DoNotOptimize(m[0]);
  }
}

// One training batch of synthetic repairs on a desk-sized model.
struct LossFixture {
  micronet::ModelState model;
  micronet::Batch batch;

  LossFixture() {
    synthetic::SynthConfig sc;
    sc.count = 16;
    sc.seed = 4;
    std::vector<encoding::Sample> samples;
    std::vector<Lexemes> corpus;
    for (const auto& p : synthetic::generate(sc)) {
      samples.push_back(encoding::encode_pair(p, {}, {}));
      corpus.push_back(samples.back().input);
      corpus.push_back(samples.back().target);
    }
    const auto vocab = encoding::build_vocab(corpus, 200);
    micronet::ModelConfig mc;
    mc.model_dim = 32;
    mc.num_heads = 4;
    mc.ff_dim = 64;
    mc.max_positions = 256;
    model = micronet::init_model(mc, vocab, 1);
    batch = micronet::make_batch(training::to_examples(samples, vocab));
  }
};

template <micronet::LossResult (*Fn)(const micronet::ModelState&, const micronet::Batch&, micronet::Gradients&,
                                     const micronet::LossOptions&)>
void BM_LossAndGrad(benchmark::State& state) {
  static const LossFixture f;
  micronet::Gradients g;
  for (auto _ : state) {
    benchmark::DoNotOptimize(Fn(f.model, f.batch, g, {}).loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.batch.size()));
}

}  // namespace

BENCHMARK(BM_Matmul<kernels::reference::matmul>)->Name("Matmul/reference")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Matmul<kernels::matmul>)->Name("Matmul/openmp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Softmax<kernels::reference::softmax_rows>)->Name("Softmax/reference")->Arg(128)->Arg(512);
BENCHMARK(BM_Softmax<kernels::softmax_rows>)->Name("Softmax/openmp")->Arg(128)->Arg(512);
BENCHMARK(BM_LossAndGrad<micronet::loss_and_grad_serial>)->Name("LossAndGrad/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LossAndGrad<micronet::loss_and_grad>)->Name("LossAndGrad/openmp")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
