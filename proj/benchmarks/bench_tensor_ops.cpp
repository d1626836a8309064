#include <benchmark/benchmark.h>

#include "catnet/autodiff.hpp"
#include "catnet/rng.hpp"

using namespace catnet;

namespace {

Tensor random_tensor(Shape shape, SplitMix64& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_MatmulForward(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  SplitMix64 rng(1);
  const Tensor a = random_tensor({n, n}, rng);
  const Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    Tape tape;
    Var out = tape.matmul(tape.constant(a), tape.constant(b));
    benchmark::DoNotOptimize(tape.value(out).data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_MatmulForward)->Arg(64)->Arg(128)->Arg(256);

void BM_MatmulTrainStep(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  SplitMix64 rng(2);
  Parameter w("w", random_tensor({n, n}, rng));
  const Tensor x = random_tensor({n, n}, rng);
  for (auto _ : state) {
    w.zero_grad();
    Tape tape;
    Var out = tape.matmul(tape.constant(x), tape.param(w));
    Var loss = tape.sum(tape.mul(out, out));
    tape.backward(loss);
    benchmark::DoNotOptimize(w.grad.data());
  }
}
BENCHMARK(BM_MatmulTrainStep)->Arg(64)->Arg(128);

void BM_SoftmaxRows(benchmark::State& state) {
  SplitMix64 rng(3);
  const Tensor x = random_tensor({64, static_cast<std::size_t>(state.range(0))}, rng);
  for (auto _ : state) {
    Tape tape;
    Var out = tape.softmax(tape.constant(x));
    benchmark::DoNotOptimize(tape.value(out).data());
  }
}
BENCHMARK(BM_SoftmaxRows)->Arg(256)->Arg(4096);

void BM_LayerNorm(benchmark::State& state) {
  SplitMix64 rng(4);
  const Tensor x = random_tensor({64, static_cast<std::size_t>(state.range(0))}, rng);
  for (auto _ : state) {
    Tape tape;
    Var out = tape.layer_norm(tape.constant(x));
    benchmark::DoNotOptimize(tape.value(out).data());
  }
}
BENCHMARK(BM_LayerNorm)->Arg(128)->Arg(512);

void BM_CrossEntropy(benchmark::State& state) {
  SplitMix64 rng(5);
  const std::size_t vocab = static_cast<std::size_t>(state.range(0));
  const Tensor logits = random_tensor({32, vocab}, rng);
  std::vector<int> targets(32);
  for (auto& t : targets) t = static_cast<int>(rng.below(vocab));
  for (auto _ : state) {
    Tape tape;
    Var loss = tape.cross_entropy(tape.leaf(logits, true), targets, 0);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.value(loss)[0]);
  }
}
BENCHMARK(BM_CrossEntropy)->Arg(1000)->Arg(8000);

}  // namespace

BENCHMARK_MAIN();
