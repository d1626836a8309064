#include <benchmark/benchmark.h>

#include "catnet/captioner.hpp"
#include "catnet/decoding.hpp"
#include "catnet/humorizer.hpp"
#include "catnet/metrics.hpp"
#include "catnet/optim.hpp"
#include "catnet/text.hpp"

using namespace catnet;

namespace {

Tensor random_tensor(Shape shape, SplitMix64& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

// One teacher-forced train step (forward + backward + Adam) at the
// desk-scale captioner defaults, batch of four 10-token captions.
void BM_CaptionTrainStep(benchmark::State& state) {
  SplitMix64 rng(11);
  CaptionerConfig cfg;
  cfg.variant = AttentionVariant::kLocal;
  cfg.vocab_size = 2000;
  cfg.embed_dim = 64;
  cfg.hidden_dim = static_cast<std::size_t>(state.range(0));
  cfg.channels = 128;
  cfg.window = 9;
  Captioner model = Captioner::init(cfg, rng);

  FeatureMapSet f;
  f.grid_h = f.grid_w = 4;
  f.channels = 128;
  f.features = random_tensor({16, 128}, rng);
  std::vector<const FeatureMapSet*> feats(4, &f);
  std::vector<std::vector<int>> gold;
  for (int i = 0; i < 4; ++i) {
    std::vector<int> g(10);
    for (auto& t : g) t = static_cast<int>(4 + rng.below(1996));
    gold.push_back(std::move(g));
  }

  AdamOptimizer opt;
  const auto params = model.params();
  for (auto _ : state) {
    opt.zero_grad(params);
    Tape tape(rng.next_u64());
    Var loss = model.train_loss(tape, feats, gold, true);
    tape.backward(loss);
    opt.step(params);
    benchmark::DoNotOptimize(tape.value(loss)[0]);
  }
}
BENCHMARK(BM_CaptionTrainStep)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_HumorTrainStep(benchmark::State& state) {
  SplitMix64 rng(12);
  HumorizerConfig cfg;
  cfg.vocab_size = 2000;
  cfg.layers = 2;
  cfg.heads = 4;
  cfg.d_model = static_cast<std::size_t>(state.range(0));
  cfg.d_ff = cfg.d_model * 4;
  cfg.max_len = 24;
  cfg.dropout = 0.1;
  Humorizer model = Humorizer::init(cfg, rng);

  using Pair = std::pair<std::vector<int>, std::vector<int>>;
  std::vector<Pair> batch;
  for (int i = 0; i < 4; ++i) {
    std::vector<int> src(8), tgt(12);
    for (auto& t : src) t = static_cast<int>(4 + rng.below(1996));
    for (auto& t : tgt) t = static_cast<int>(4 + rng.below(1996));
    batch.emplace_back(std::move(src), std::move(tgt));
  }

  AdamOptimizer opt;
  const auto params = model.params();
  for (auto _ : state) {
    opt.zero_grad(params);
    Tape tape(rng.next_u64());
    Var loss = model.train_loss(tape, batch, true);
    tape.backward(loss);
    opt.step(params);
    benchmark::DoNotOptimize(tape.value(loss)[0]);
  }
}
BENCHMARK(BM_HumorTrainStep)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_BeamSearchCaption(benchmark::State& state) {
  SplitMix64 rng(13);
  CaptionerConfig cfg;
  cfg.variant = AttentionVariant::kLocal;
  cfg.vocab_size = 2000;
  cfg.embed_dim = 64;
  cfg.hidden_dim = 128;
  cfg.channels = 128;
  cfg.window = 9;
  Captioner model = Captioner::init(cfg, rng);
  FeatureMapSet f;
  f.grid_h = f.grid_w = 4;
  f.channels = 128;
  f.features = random_tensor({16, 128}, rng);

  DecodeConfig decode;
  decode.beam_width = static_cast<std::size_t>(state.range(0));
  decode.max_len = 16;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.generate(f, decode));
  }
}
BENCHMARK(BM_BeamSearchCaption)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_CorpusMetrics(benchmark::State& state) {
  SplitMix64 rng(14);
  const std::vector<std::string> words = {"a",    "dog",  "cat",  "runs", "sleeps", "on",
                                          "the",  "mat",  "grass", "two", "boys",   "kick"};
  std::vector<EvalInstance> corpus;
  for (int i = 0; i < 200; ++i) {
    EvalInstance inst;
    for (std::size_t k = 0; k < 6 + rng.below(6); ++k) {
      inst.candidate.push_back(words[rng.below(words.size())]);
    }
    for (int r = 0; r < 5; ++r) {
      std::vector<std::string> ref;
      for (std::size_t k = 0; k < 6 + rng.below(6); ++k) {
        ref.push_back(words[rng.below(words.size())]);
      }
      inst.references.push_back(std::move(ref));
    }
    corpus.push_back(std::move(inst));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(bleu(corpus).bleu[3]);
    benchmark::DoNotOptimize(meteor(corpus).score);
  }
}
BENCHMARK(BM_CorpusMetrics)->Unit(benchmark::kMillisecond);

}  // namespace
