#include "catnet/decoding.hpp"

#include <algorithm>
#include <cmath>

#include "catnet/rng.hpp"
#include "doctest.h"

using namespace catnet;

namespace {

// Deterministic pseudo-random step function over |V| tokens: log-probs are a
// pure hash of (instance seed, prefix).
StepFn synthetic_step(std::uint64_t seed, std::size_t vocab) {
  return [seed, vocab](const std::vector<int>& prefix) {
    std::uint64_t h = seed;
    for (int t : prefix) {
      SplitMix64 mix(h ^ (static_cast<std::uint64_t>(t) * 0x9E3779B97F4A7C15ull));
      h = mix.next_u64();
    }
    SplitMix64 rng(h);
    std::vector<double> logits(vocab);
    for (double& v : logits) v = rng.uniform(-3.0, 3.0);
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (double& v : logits) v -= lse;
    return logits;
  };
}

DecodeConfig toy_config(std::size_t beam = 1) {
  DecodeConfig cfg;
  cfg.beam_width = beam;
  cfg.max_len = 3;
  cfg.length_norm = 0.0;
  cfg.start_id = 100;  // outside the toy vocabulary
  cfg.end_id = 3;
  cfg.forbidden.clear();
  return cfg;
}

// Score of a finished/truncated sequence under the step function, including
// the END draw when the sequence terminated early.
double sequence_score(const StepFn& step, const DecodeConfig& cfg, const std::vector<int>& seq) {
  std::vector<int> prefix = {cfg.start_id};
  double score = 0.0;
  for (int t : seq) {
    score += step(prefix)[static_cast<std::size_t>(t)];
    prefix.push_back(t);
  }
  if (seq.size() < cfg.max_len) score += step(prefix)[static_cast<std::size_t>(cfg.end_id)];
  return score;
}

// Exhaustive argmax over all |V|^max_len raw strings, truncated at the first
// END, with the beam's tie rules (higher score, shorter, lexicographic).
std::vector<int> brute_force_best(const StepFn& step, const DecodeConfig& cfg, std::size_t vocab) {
  std::vector<int> best;
  double best_score = -1e300;
  bool have = false;
  const std::size_t total = static_cast<std::size_t>(std::pow(vocab, cfg.max_len));
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    std::vector<int> raw;
    for (std::size_t i = 0; i < cfg.max_len; ++i) {
      raw.push_back(static_cast<int>(c % vocab));
      c /= vocab;
    }
    std::vector<int> seq;
    for (int t : raw) {
      if (t == cfg.end_id) break;
      seq.push_back(t);
    }
    const double score = sequence_score(step, cfg, seq);
    const bool better =
        !have || score > best_score ||
        (score == best_score &&
         (seq.size() < best.size() || (seq.size() == best.size() && seq < best)));
    if (better) {
      best = seq;
      best_score = score;
      have = true;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("greedy decode basics") {
  SUBCASE("END-peaked step function yields empty output") {
    const StepFn step = [](const std::vector<int>&) {
      return std::vector<double>{-40.0, -40.0, -40.0, -0.01};
    };
    CHECK(greedy_decode(step, toy_config()).empty());
  }
  SUBCASE("scripted a, b, END") {
    const StepFn step = [](const std::vector<int>& prefix) {
      std::vector<double> lp(4, -40.0);
      if (prefix.size() == 1) {
        lp[0] = -0.1;
      } else if (prefix.size() == 2) {
        lp[1] = -0.1;
      } else {
        lp[3] = -0.1;
      }
      return lp;
    };
    CHECK(greedy_decode(step, toy_config()) == std::vector<int>{0, 1});
  }
  SUBCASE("argmax ties resolve to the lowest index") {
    const StepFn step = [](const std::vector<int>& prefix) {
      if (prefix.size() >= 2) return std::vector<double>{-40.0, -40.0, -40.0, 0.0};
      return std::vector<double>{-1.0, -1.0, -1.0, -40.0};
    };
    CHECK(greedy_decode(step, toy_config()) == std::vector<int>{0});
  }
}

TEST_CASE("beam width 1 equals greedy on 100 random step functions") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const StepFn step = synthetic_step(seed, 4);
    DecodeConfig cfg = toy_config(1);
    CHECK(beam_search(step, cfg) == greedy_decode(step, cfg));
  }
}

TEST_CASE("exhaustive-width beam equals brute-force enumeration on 50 toy instances") {
  for (std::uint64_t seed = 1000; seed < 1050; ++seed) {
    const StepFn step = synthetic_step(seed, 4);
    DecodeConfig cfg = toy_config(64);  // 64 >= every candidate set, nothing pruned
    CHECK(beam_search(step, cfg) == brute_force_best(step, cfg, 4));
  }
}

TEST_CASE("beam never scores below greedy under its own objective") {
  for (std::uint64_t seed = 500; seed < 560; ++seed) {
    const StepFn step = synthetic_step(seed, 5);
    for (std::size_t width : {1, 2, 3, 8}) {
      DecodeConfig cfg = toy_config(width);
      cfg.max_len = 4;
      const double g = sequence_score(step, cfg, greedy_decode(step, cfg));
      const double b = sequence_score(step, cfg, beam_search(step, cfg));
      CHECK(b >= g - 1e-12);
    }
  }
}

TEST_CASE("probability-one sequence comes back for any width") {
  const std::vector<int> target = {2, 0, 1};
  const StepFn step = [&target](const std::vector<int>& prefix) {
    std::vector<double> lp(4, -40.0);
    const std::size_t t = prefix.size() - 1;
    lp[static_cast<std::size_t>(t < target.size() ? target[t] : 3)] = -1e-9;
    return lp;
  };
  for (std::size_t width : {1, 2, 5, 64}) {
    DecodeConfig cfg = toy_config(width);
    cfg.max_len = 5;
    CHECK(beam_search(step, cfg) == target);
  }
}

TEST_CASE("decoding is deterministic across repeated runs") {
  const StepFn step = synthetic_step(7, 6);
  DecodeConfig cfg = toy_config(5);
  cfg.max_len = 4;
  const auto first = beam_search(step, cfg);
  for (int i = 0; i < 5; ++i) CHECK(beam_search(step, cfg) == first);
}

TEST_CASE("width bounds enforced") {
  const StepFn step = synthetic_step(1, 4);
  DecodeConfig cfg = toy_config(0);
  CHECK_THROWS_AS(beam_search(step, cfg), std::invalid_argument);
  cfg.beam_width = 65;
  CHECK_THROWS_AS(beam_search(step, cfg), std::invalid_argument);
}

TEST_CASE("forbidden ids are never emitted") {
  const StepFn step = [](const std::vector<int>&) {
    // PAD (0) is the argmax, END very unlikely
    return std::vector<double>{-0.001, -5.0, -6.0, -30.0, -7.0};
  };
  DecodeConfig cfg;
  cfg.beam_width = 3;
  cfg.max_len = 4;
  cfg.start_id = 1;
  cfg.end_id = 2;
  cfg.forbidden = {0, 1, 3};
  for (int t : beam_search(step, cfg)) {
    CHECK(t != 0);
    CHECK(t != 1);
    CHECK(t != 3);
  }
}
