#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "catnet/autodiff.hpp"
#include "catnet/checkpoint.hpp"
#include "catnet/decoding.hpp"
#include "catnet/features.hpp"
#include "catnet/rng.hpp"
#include "catnet/text.hpp"

namespace catnet {

enum class AttentionVariant { kGlobal, kLocal };

struct CaptionerConfig {
  AttentionVariant variant = AttentionVariant::kLocal;
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 128;
  std::size_t hidden_dim = 256;
  std::size_t channels = 512;   // feature vector depth C
  std::size_t window = 9;       // local attention half-width D
  std::size_t max_len = 30;
  double dropout = 0.0;         // on the hidden state before the output projection
};

struct AttentionOut {
  Var context;  // [1, C]
  Var weights;  // [1, S] (global) or [1, window size] (local)
  std::size_t window_begin = 0;  // first flattened position covered (local)
};

/// Decoder over pre-extracted feature maps: single-layer LSTM fed
/// [word embedding ++ attention context ++ hidden], with either global
/// bilinear ("general" score) attention or a Gaussian-windowed local variant
/// around a predicted center position.
class Captioner {
 public:
  static Captioner init(const CaptionerConfig& cfg, SplitMix64& rng);

  const CaptionerConfig& config() const { return cfg_; }
  std::vector<Parameter*> params();
  std::size_t param_count() const;

  /// Parameters registered on one tape. Bind once per tape, reuse for every
  /// step so the weights are copied onto the tape a single time.
  struct Bound {
    Var embed, lstm_w, lstm_b, attn_w, attn_wp, attn_vp, init_wh, init_wc, out_w, out_b;
  };
  Bound bind(Tape& tape);

  struct State {
    Var h;  // [1, H]
    Var c;  // [1, H]
  };

  /// h = tanh(mean-feature * W_h), likewise c. features is [S, C].
  State init_state(Tape& tape, const Bound& b, Var features) const;

  /// score_i = h W_a f_i over all S positions; weights = softmax(score).
  AttentionOut attend_global(Tape& tape, const Bound& b, Var h, Var features) const;

  /// Predicted-center local attention: center p = S * sigmoid(v_p . tanh(h W_p)),
  /// window |i - p| <= D, base scores as in attend_global restricted to the
  /// window, each multiplied by exp(-(i-p)^2 / (2 sigma^2)) with sigma = D/2,
  /// then renormalized.
  AttentionOut attend_local(Tape& tape, const Bound& b, Var h, Var features) const;

  /// Same math with an explicit center/spread; attend_local delegates here.
  /// Window membership is fixed by the center VALUE, so gradients flow
  /// through the Gaussian and the scores but not the window bounds.
  AttentionOut local_attention_at(Tape& tape, const Bound& b, Var h, Var features, Var center,
                                  double sigma, std::size_t window) const;

  AttentionOut attend(Tape& tape, const Bound& b, Var h, Var features) const;

  /// One teacher-forcing / generation step. Consumes the previous word
  /// embedding and the attention context, updates the state in place, and
  /// returns logits [1, V].
  Var lstm_step(Tape& tape, const Bound& b, State& state, Var word_embedding, Var context,
                bool train) const;

  /// [START, gold...]: the inputs the train step feeds at every position
  /// regardless of the model's own predictions.
  static std::vector<int> teacher_inputs(std::span<const int> gold);

  /// Mean token cross-entropy over a batch of (features, gold caption)
  /// examples, teacher forced, PAD ignored. Gold sequences are raw content
  /// token ids (no markers); every sequence is padded to the batch max
  /// length and END is appended as the final target.
  Var train_loss(Tape& tape, std::span<const FeatureMapSet* const> features,
                 std::span<const std::vector<int>> gold, bool train);

  /// Content token ids for one image via greedy (beam_width 1) or beam
  /// decoding. Never emits reserved tokens.
  std::vector<int> generate(const FeatureMapSet& features, const DecodeConfig& decode);
  StepFn step_fn(const FeatureMapSet& features);

  Checkpoint to_checkpoint(const Vocabulary& vocab) const;
  static Captioner from_checkpoint(const Checkpoint& ckpt);

 private:
  Captioner() = default;

  CaptionerConfig cfg_;
  Parameter embed_;    // [V, E]
  Parameter lstm_w_;   // [E + C + H, 4H], gate order: input, forget, output, candidate
  Parameter lstm_b_;   // [4H], forget slice initialized to +1
  Parameter attn_w_;   // [H, C]
  Parameter attn_wp_;  // [H, H], local only
  Parameter attn_vp_;  // [H, 1], local only
  Parameter init_wh_;  // [C, H]
  Parameter init_wc_;  // [C, H]
  Parameter out_w_;    // [H, V]
  Parameter out_b_;    // [V]
};

}  // namespace catnet
