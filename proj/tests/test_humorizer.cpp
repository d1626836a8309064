#include "catnet/humorizer.hpp"

#include <cmath>
#include <cstring>

#include "catnet/errors.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace catnet;
using catnet::testing::random_tensor;

namespace {

HumorizerConfig micro_config(std::size_t layers = 1, std::size_t heads = 2,
                             std::size_t d_model = 16, std::size_t d_ff = 32,
                             std::size_t vocab = 13) {
  HumorizerConfig cfg;
  cfg.vocab_size = vocab;
  cfg.layers = layers;
  cfg.heads = heads;
  cfg.d_model = d_model;
  cfg.d_ff = d_ff;
  cfg.max_len = 12;
  cfg.dropout = 0.0;
  return cfg;
}

std::vector<int> random_tokens(SplitMix64& rng, std::size_t len, std::size_t vocab) {
  std::vector<int> out(len);
  for (auto& t : out) {
    t = static_cast<int>(Vocabulary::kReservedCount +
                         rng.below(vocab - Vocabulary::kReservedCount));
  }
  return out;
}

}  // namespace

TEST_CASE("positional encoding") {
  const Tensor pe = positional_encoding(16, 8);
  SUBCASE("row zero alternates 0/1") {
    for (std::size_t i = 0; i < 8; i += 2) {
      CHECK(pe.at(0, i) == 0.0);
      CHECK(pe.at(0, i + 1) == 1.0);
    }
  }
  SUBCASE("spot values sin(1) and cos(1)") {
    CHECK(std::abs(pe.at(1, 0) - std::sin(1.0)) <= 1e-9);
    CHECK(std::abs(pe.at(1, 1) - std::cos(1.0)) <= 1e-9);
  }
  SUBCASE("entries bounded by [-1, 1]") {
    const Tensor big = positional_encoding(512, 32);
    for (std::size_t i = 0; i < big.numel(); ++i) {
      CHECK(big[i] >= -1.0);
      CHECK(big[i] <= 1.0);
    }
  }
  SUBCASE("rows are pairwise distinct up to 512 positions") {
    const Tensor big = positional_encoding(512, 16);
    double min_dist = 1e300;
    for (std::size_t a = 0; a < 512; ++a) {
      for (std::size_t b = a + 1; b < 512; ++b) {
        double d = 0.0;
        for (std::size_t k = 0; k < 16; ++k) {
          const double diff = big.at(a, k) - big.at(b, k);
          d += diff * diff;
        }
        min_dist = std::min(min_dist, d);
      }
    }
    CHECK(min_dist > 0.0);
  }
  SUBCASE("odd width rejected") {
    CHECK_THROWS_AS(positional_encoding(4, 7), std::invalid_argument);
  }
}

TEST_CASE("scaled dot attention primitives") {
  SplitMix64 rng(21);
  SUBCASE("single key/value returns that value for any query") {
    Tape tape;
    Tensor v = random_tensor({1, 4}, rng);
    Var out = scaled_dot_attention(tape, tape.constant(random_tensor({3, 4}, rng)),
                                   tape.constant(random_tensor({1, 4}, rng)),
                                   tape.constant(v), nullptr);
    for (std::size_t q = 0; q < 3; ++q) {
      for (std::size_t k = 0; k < 4; ++k) {
        CHECK(tape.value(out).at(q, k) == doctest::Approx(v[k]).epsilon(1e-12));
      }
    }
  }
  SUBCASE("all-equal scores average the value rows") {
    Tape tape;
    Tensor values = random_tensor({4, 3}, rng);
    // zero queries make every score zero
    Var out = scaled_dot_attention(tape, tape.constant(Tensor::zeros({2, 5})),
                                   tape.constant(random_tensor({4, 5}, rng)),
                                   tape.constant(values), nullptr);
    for (std::size_t k = 0; k < 3; ++k) {
      double mean = 0.0;
      for (std::size_t r = 0; r < 4; ++r) mean += values.at(r, k);
      mean /= 4.0;
      CHECK(tape.value(out).at(0, k) == doctest::Approx(mean).epsilon(1e-12));
    }
  }
  SUBCASE("causal mask: first row sees only the first value") {
    Tape tape;
    Tensor values = random_tensor({3, 4}, rng);
    const std::vector<std::uint8_t> causal = {1, 0, 0, 1, 1, 0, 1, 1, 1};
    Var out = scaled_dot_attention(tape, tape.constant(random_tensor({3, 4}, rng)),
                                   tape.constant(random_tensor({3, 4}, rng)),
                                   tape.constant(values), &causal);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(tape.value(out).at(0, k) == values.at(0, k));
    }
  }
  SUBCASE("fully masked row yields a zero vector") {
    Tape tape;
    const std::vector<std::uint8_t> mask = {0, 0, 0, 1, 1, 1};
    Var out = scaled_dot_attention(tape, tape.constant(random_tensor({2, 4}, rng)),
                                   tape.constant(random_tensor({3, 4}, rng)),
                                   tape.constant(random_tensor({3, 4}, rng)), &mask);
    for (std::size_t k = 0; k < 4; ++k) CHECK(tape.value(out).at(0, k) == 0.0);
  }
}

TEST_CASE("parameter count matches the closed form") {
  SplitMix64 rng(22);
  for (auto [l, h, d, f] : {std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>{1, 1, 8, 16},
                            {2, 4, 16, 64},
                            {0, 2, 8, 16}}) {
    HumorizerConfig cfg = micro_config(l, h, d, f);
    Humorizer m = Humorizer::init(cfg, rng);
    CHECK(m.param_count() == Humorizer::expected_param_count(m.config()));
  }
  SUBCASE("adapter configs count the bridge matrix") {
    HumorizerConfig cfg = micro_config();
    cfg.embed_dim = 6;  // != d_model -> adapter
    Humorizer m = Humorizer::init(cfg, rng);
    CHECK(m.embed_width() == 6);
    CHECK(m.param_count() == Humorizer::expected_param_count(m.config()));
  }
  SUBCASE("indivisible heads rejected") {
    HumorizerConfig cfg = micro_config(1, 3, 16, 32);
    CHECK_THROWS_AS(Humorizer::init(cfg, rng), DataError);
  }
}

TEST_CASE("encoder properties") {
  SplitMix64 rng(23);

  SUBCASE("L=0 memory is exactly scaled embedding plus positional encoding") {
    HumorizerConfig cfg = micro_config(0);
    Humorizer m = Humorizer::init(cfg, rng);
    const std::vector<int> src = {4, 7, 5};
    Tape tape;
    auto b = m.bind(tape);
    Var mem = m.encode(tape, b, src, false);
    const Tensor& embed = tape.value(b.embed);
    const Tensor pe = positional_encoding(cfg.max_len, cfg.d_model);
    const double s = std::sqrt(static_cast<double>(cfg.d_model));
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t k = 0; k < cfg.d_model; ++k) {
        const double want = embed.at(static_cast<std::size_t>(src[t]), k) * s + pe.at(t, k);
        CHECK(tape.value(mem).at(t, k) == want);
      }
    }
  }
  SUBCASE("without positional encoding the encoder is permutation equivariant") {
    HumorizerConfig cfg = micro_config(2);
    cfg.use_positional = false;
    Humorizer m = Humorizer::init(cfg, rng);
    const std::vector<int> src = {4, 7, 5, 9};
    std::vector<int> swapped = src;
    std::swap(swapped[1], swapped[2]);
    Tape tape;
    auto b = m.bind(tape);
    Var mem_a = m.encode(tape, b, src, false);
    Var mem_b = m.encode(tape, b, swapped, false);
    for (std::size_t k = 0; k < cfg.d_model; ++k) {
      CHECK(std::abs(tape.value(mem_a).at(1, k) - tape.value(mem_b).at(2, k)) <= 1e-9);
      CHECK(std::abs(tape.value(mem_a).at(2, k) - tape.value(mem_b).at(1, k)) <= 1e-9);
      CHECK(std::abs(tape.value(mem_a).at(0, k) - tape.value(mem_b).at(0, k)) <= 1e-9);
    }
  }
  SUBCASE("appending PAD tokens leaves non-PAD memory rows unchanged") {
    Humorizer m = Humorizer::init(micro_config(2, 2, 16, 32), rng);
    const std::vector<int> src = {4, 7, 5};
    std::vector<int> padded = src;
    padded.push_back(Vocabulary::kPad);
    padded.push_back(Vocabulary::kPad);
    Tape tape;
    auto b = m.bind(tape);
    Var mem_a = m.encode(tape, b, src, false);
    Var mem_b = m.encode(tape, b, padded, false);
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t k = 0; k < 16; ++k) {
        CHECK(std::abs(tape.value(mem_a).at(t, k) - tape.value(mem_b).at(t, k)) <= 1e-9);
      }
    }
  }
  SUBCASE("length guards") {
    Humorizer m = Humorizer::init(micro_config(), rng);
    Tape tape;
    auto b = m.bind(tape);
    CHECK_THROWS_AS(m.encode(tape, b, std::vector<int>{}, false), DataError);
    CHECK_THROWS_AS(m.encode(tape, b, std::vector<int>(13, 5), false), DataError);
  }
}

TEST_CASE("decoder causality") {
  SplitMix64 rng(24);
  Humorizer m = Humorizer::init(micro_config(2, 2, 16, 32), rng);

  SUBCASE("logits at t are bit-identical under perturbations beyond t") {
    for (int trial = 0; trial < 50; ++trial) {
      const std::vector<int> src = random_tokens(rng, 1 + rng.below(6), 13);
      std::vector<int> prefix = random_tokens(rng, 2 + rng.below(5), 13);
      prefix.insert(prefix.begin(), Vocabulary::kStart);
      const std::size_t t = rng.below(prefix.size() - 1);

      Tape tape;
      auto b = m.bind(tape);
      Var mem = m.encode(tape, b, src, false);
      Var full = m.decode_logits(tape, b, mem, src, prefix, false);

      std::vector<int> mutated = prefix;
      for (std::size_t j = t + 1; j < mutated.size(); ++j) {
        mutated[j] = static_cast<int>(4 + rng.below(9));
      }
      Var other = m.decode_logits(tape, b, mem, src, mutated, false);
      for (std::size_t pos = 0; pos <= t; ++pos) {
        const double* a = tape.value(full).data() + pos * 13;
        const double* c = tape.value(other).data() + pos * 13;
        CHECK(std::memcmp(a, c, 13 * sizeof(double)) == 0);
      }
    }
  }
  SUBCASE("L=0 single-token prefix reduces to the output projection") {
    Humorizer m0 = Humorizer::init(micro_config(0), rng);
    const std::vector<int> src = {5};
    const std::vector<int> prefix = {Vocabulary::kStart};
    Tape tape;
    auto b = m0.bind(tape);
    Var mem = m0.encode(tape, b, src, false);
    Var logits = m0.decode_logits(tape, b, mem, src, prefix, false);

    const Tensor& embed = tape.value(b.embed);
    const Tensor& out_w = tape.value(b.out_w);
    const Tensor& out_b = tape.value(b.out_b);
    const Tensor pe = positional_encoding(12, 16);
    for (std::size_t v = 0; v < 13; ++v) {
      double want = out_b[v];
      for (std::size_t k = 0; k < 16; ++k) {
        want += (embed.at(Vocabulary::kStart, k) * 4.0 + pe.at(0, k)) * out_w.at(k, v);
      }
      CHECK(tape.value(logits)[v] == doctest::Approx(want).epsilon(1e-12));
    }
  }
  SUBCASE("PAD source columns cannot influence the logits") {
    const std::vector<int> src = {4, 7, Vocabulary::kPad, Vocabulary::kPad};
    const std::vector<int> prefix = {Vocabulary::kStart, 5, 6};
    const auto run = [&] {
      Tape tape;
      auto b = m.bind(tape);
      Var mem = m.encode(tape, b, src, false);
      Var logits = m.decode_logits(tape, b, mem, src, prefix, false);
      return tape.value(logits);
    };
    const Tensor before = run();
    // perturbing the PAD embedding row perturbs exactly the masked positions
    for (Parameter* p : m.params()) {
      if (p->name == "embed") {
        for (std::size_t k = 0; k < 16; ++k) p->value.at(Vocabulary::kPad, k) += 0.37;
      }
    }
    const Tensor after = run();
    for (std::size_t i = 0; i < before.numel(); ++i) {
      CHECK(std::abs(before[i] - after[i]) <= 1e-9);
    }
  }
}

TEST_CASE("humor training loss") {
  SplitMix64 rng(25);
  Humorizer m = Humorizer::init(micro_config(1, 2, 16, 32), rng);
  using Pair = std::pair<std::vector<int>, std::vector<int>>;

  SUBCASE("initial loss is close to ln V") {
    const std::vector<Pair> batch = {{{4, 5, 6}, {7, 8, 9, 10}}};
    Tape tape;
    CHECK(tape.value(m.train_loss(tape, batch, false))[0] ==
          doctest::Approx(std::log(13.0)).epsilon(0.10));
  }
  SUBCASE("the phase is not in the math: identical params give identical loss") {
    const std::vector<Pair> batch = {{{4, 5}, {6, 7, 8}}, {{9, 10}, {11, 12}}};
    Tape t1, t2;
    const double pretrain_style = t1.value(m.train_loss(t1, batch, false))[0];
    const double finetune_style = t2.value(m.train_loss(t2, batch, false))[0];
    CHECK(pretrain_style == finetune_style);
  }
  SUBCASE("empty batch and empty sides rejected") {
    Tape tape;
    CHECK_THROWS_AS(m.train_loss(tape, {}, false), DataError);
    const std::vector<Pair> bad = {{{}, {5}}};
    CHECK_THROWS_AS(m.train_loss(tape, bad, false), DataError);
  }
}

TEST_CASE("micro transformer passes finite differences end to end") {
  SplitMix64 rng(26);
  Humorizer m = Humorizer::init(micro_config(1, 1, 8, 16, 11), rng);
  using Pair = std::pair<std::vector<int>, std::vector<int>>;
  const std::vector<Pair> batch = {{{4, 5, 6}, {7, 8}}};

  const auto loss_value = [&] {
    Tape tape;
    return tape.value(m.train_loss(tape, batch, false))[0];
  };
  const auto backward = [&] {
    Tape tape;
    Var loss = m.train_loss(tape, batch, false);
    tape.backward(loss);
  };
  const auto params = m.params();
  CHECK(catnet::testing::param_fd_max_rel_err(loss_value, params, backward) <= 1e-4);
}

TEST_CASE("funnify surface") {
  SplitMix64 rng(27);
  const Vocabulary vocab = Vocabulary::build_from_texts(
      std::vector<std::string>{"a dog runs in the snow", "the cat naps on a mat"}, 1);
  HumorizerConfig cfg = micro_config(1, 2, 16, 32, vocab.size());
  Humorizer m = Humorizer::init(cfg, rng);
  DecodeConfig decode;
  decode.beam_width = 2;
  decode.max_len = 8;

  SUBCASE("empty input gives empty output without touching the model") {
    CHECK(m.funnify("", vocab, decode).empty());
    CHECK(m.funnify("   ", vocab, decode).empty());
  }
  SUBCASE("output never contains reserved surface forms") {
    const std::string out = m.funnify("a dog runs", vocab, decode);
    for (const std::string& reserved : Vocabulary::reserved_tokens()) {
      CHECK(out.find(reserved) == std::string::npos);
    }
  }
  SUBCASE("beam width 1 equals greedy") {
    const std::vector<int> src = vocab.encode(tokenize("a dog runs"), false);
    DecodeConfig g = decode;
    g.beam_width = 1;
    const auto greedy = m.translate(src, g);
    const StepFn fn = m.step_fn(src);
    DecodeConfig capped = g;
    capped.max_len = std::min(g.max_len, cfg.max_len - 1);
    CHECK(greedy == greedy_decode(fn, capped));

    // normalized log-probabilities out of the step function
    const std::vector<double> lp = m.step_fn(src)({Vocabulary::kStart});
    double z = 0.0;
    for (double v : lp) z += std::exp(v);
    CHECK(std::abs(std::log(z)) <= 1e-6);
  }
  SUBCASE("checkpoint roundtrip preserves translations") {
    const Checkpoint ckpt = m.to_checkpoint(vocab);
    Humorizer loaded = Humorizer::from_checkpoint(ckpt);
    CHECK(loaded.funnify("the cat naps", vocab, decode) ==
          m.funnify("the cat naps", vocab, decode));
  }
  SUBCASE("pretrained embeddings with a different width insert an adapter") {
    catnet::testing::TempDir dir("emb");
    std::string file;
    for (const char* w : {"dog", "cat", "runs", "naps"}) {
      file += std::string(w) + " 0.1 0.2 0.3 0.4 0.5 0.6\n";
    }
    catnet::testing::write_text(dir.file("glove.txt"), file);
    SplitMix64 r2(5);
    EmbeddingTable table = load_embeddings(dir.file("glove.txt"), vocab, 6, r2);
    HumorizerConfig acfg = micro_config(1, 2, 16, 32, vocab.size());
    Humorizer adapted = Humorizer::init(acfg, r2, &table);
    CHECK(adapted.embed_width() == 6);
    CHECK(adapted.param_count() == Humorizer::expected_param_count(adapted.config()));
    // still trains and decodes
    const std::string out = adapted.funnify("a dog runs", vocab, decode);
    CHECK(out.find("<") == std::string::npos);
  }
}
