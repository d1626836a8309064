#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "catnet/autodiff.hpp"
#include "catnet/checkpoint.hpp"
#include "catnet/decoding.hpp"
#include "catnet/rng.hpp"
#include "catnet/text.hpp"

namespace catnet {

struct HumorizerConfig {
  std::size_t vocab_size = 0;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d_model = 128;
  std::size_t d_ff = 512;
  std::size_t max_len = 40;
  double dropout = 0.1;
  /// Embedding width; 0 means d_model (no adapter). When a pretrained table
  /// of a different width initializes the embeddings, a learned linear
  /// adapter (embed_dim -> d_model) bridges the gap.
  std::size_t embed_dim = 0;
  /// Ablation switch used by permutation-equivariance tests.
  bool use_positional = true;
};

/// Sinusoidal table: PE(pos, 2i) = sin(pos / 10000^(2i/d)),
/// PE(pos, 2i+1) = cos(pos / 10000^(2i/d)). d_model must be even.
Tensor positional_encoding(std::size_t max_len, std::size_t d_model);

/// softmax(Q K^T / sqrt(d_k)) V with optional keep-mask over the score
/// matrix; masked positions get exactly zero weight and a fully masked row
/// yields a zero output row.
Var scaled_dot_attention(Tape& tape, Var q, Var k, Var v,
                         const std::vector<std::uint8_t>* keep);

/// Post-norm encoder-decoder transformer rewriting factual sentences as
/// humorous ones. Shared source/target embedding table, untied output
/// projection, attention projections without bias.
class Humorizer {
 public:
  static Humorizer init(const HumorizerConfig& cfg, SplitMix64& rng,
                        const EmbeddingTable* pretrained = nullptr);

  const HumorizerConfig& config() const { return cfg_; }
  std::size_t embed_width() const { return embed_.value.cols(); }
  std::vector<Parameter*> params();
  std::size_t param_count() const;
  /// Closed form the construction asserts against:
  ///   V*E + [E*D if adapter] + L*(4D^2 + 2DF + F + 5D) + L*(8D^2 + 2DF + F + 7D) + D*V + V
  /// with E the embedding width, D = d_model and F = d_ff.
  static std::size_t expected_param_count(const HumorizerConfig& cfg);

  struct LayerBound {
    Var wq, wk, wv, wo;              // self-attention
    Var cq, ck, cv, co;              // cross-attention (decoder layers only)
    Var ff_w1, ff_b1, ff_w2, ff_b2;
    Var ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
  };
  struct Bound {
    Var embed, adapter, out_w, out_b;
    std::vector<LayerBound> enc, dec;
    bool has_adapter = false;
  };
  Bound bind(Tape& tape);

  /// Encoder memory [len(src), d_model]. src must be non-empty and within
  /// max_len; PAD positions are masked as attention keys throughout.
  Var encode(Tape& tape, const Bound& b, std::span<const int> src, bool train) const;

  /// Logits [len(prefix), |V|]; position t sees target tokens <= t (causal
  /// mask) plus the non-PAD memory columns.
  Var decode_logits(Tape& tape, const Bound& b, Var memory, std::span<const int> src,
                    std::span<const int> tgt_prefix, bool train) const;

  /// Teacher-forced mean token cross-entropy over a batch of pairs of
  /// content token ids; both sides padded to the batch max, PAD ignored.
  /// Pretrain and finetune share this math; the phase only selects data and
  /// initialization upstream.
  Var train_loss(Tape& tape, std::span<const std::pair<std::vector<int>, std::vector<int>>> batch,
                 bool train);

  /// Content token ids for one source sentence (greedy when beam_width 1).
  std::vector<int> translate(std::span<const int> src, const DecodeConfig& decode);
  StepFn step_fn(std::span<const int> src);

  /// tokenize -> encode -> decode -> detokenize. Empty input gives empty
  /// output without touching the model.
  std::string funnify(const std::string& sentence, const Vocabulary& vocab,
                      const DecodeConfig& decode);

  Checkpoint to_checkpoint(const Vocabulary& vocab) const;
  static Humorizer from_checkpoint(const Checkpoint& ckpt);

 private:
  struct LayerParams {
    Parameter wq, wk, wv, wo;
    Parameter cq, ck, cv, co;
    Parameter ff_w1, ff_b1, ff_w2, ff_b2;
    Parameter ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
  };

  Humorizer() = default;

  Var embed_sequence(Tape& tape, const Bound& b, std::span<const int> ids, bool train) const;
  Var attention_block(Tape& tape, Var q_in, Var kv_in, Var wq, Var wk, Var wv, Var wo,
                      const std::vector<std::uint8_t>& keep, bool train) const;
  Var feed_forward(Tape& tape, const LayerBound& lb, Var x, bool train) const;
  Var add_norm(Tape& tape, Var residual, Var sub, Var gain, Var bias, bool train) const;

  HumorizerConfig cfg_;
  Parameter embed_;                    // [V, E]
  std::optional<Parameter> adapter_;   // [E, d_model] when E != d_model
  std::vector<LayerParams> enc_;
  std::vector<LayerParams> dec_;
  Parameter out_w_;                    // [d_model, V]
  Parameter out_b_;                    // [V]
  Tensor pos_enc_;                     // [max_len, d_model]
};

}  // namespace catnet
