#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace catnet {

/// Next-token scorer shared by both models: given the generated prefix
/// (START included as prefix[0]), return log-probabilities over the whole
/// vocabulary, log-softmax normalized. Adapters bake features / memory into
/// the closure.
using StepFn = std::function<std::vector<double>(const std::vector<int>& prefix)>;

struct DecodeConfig {
  std::size_t beam_width = 5;
  std::size_t max_len = 30;
  double length_norm = 0.7;  // final ranking by logprob / len^alpha
  int start_id = 1;
  int end_id = 2;
  /// Never emitted: PAD, START, UNK by default. END terminates.
  std::vector<int> forbidden = {0, 1, 3};
};

/// Argmax decoding (ties -> lowest index); stops at END or max_len. The
/// returned tokens exclude START and END.
std::vector<int> greedy_decode(const StepFn& step, const DecodeConfig& cfg);

/// Breadth-limited best-first search: every live hypothesis expands over the
/// full vocabulary, the top beam_width candidates by cumulative log-prob
/// survive, finished ones retire to a pool. Final ranking divides by
/// len^length_norm; ties break toward shorter, then lexicographically
/// smaller token sequences. The greedy rollout is always a member of the
/// candidate pool, so the result never ranks below greedy. beam_width is
/// capped at 64.
std::vector<int> beam_search(const StepFn& step, const DecodeConfig& cfg);

}  // namespace catnet
