#include "catnet/captioner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>

#include "catnet/errors.hpp"

namespace catnet {
namespace {

Tensor glorot_uniform(std::size_t rows, std::size_t cols, SplitMix64& rng) {
  Tensor t({rows, cols});
  const double r = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-r, r);
  return t;
}

std::vector<double> log_softmax_row(const Tensor& logits) {
  const std::size_t n = logits.numel();
  std::vector<double> out(n);
  double mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(logits[i] - mx);
  const double lse = mx + std::log(z);
  for (std::size_t i = 0; i < n; ++i) out[i] = logits[i] - lse;
  return out;
}

}  // namespace

Captioner Captioner::init(const CaptionerConfig& cfg, SplitMix64& rng) {
  if (cfg.vocab_size <= Vocabulary::kReservedCount) {
    throw DataError("captioner: vocabulary too small (" + std::to_string(cfg.vocab_size) + ")");
  }
  if (cfg.max_len < 1) {
    throw DataError("captioner: max_len must be >= 1");
  }
  Captioner m;
  m.cfg_ = cfg;
  const std::size_t e = cfg.embed_dim, h = cfg.hidden_dim, c = cfg.channels, v = cfg.vocab_size;

  m.embed_ = Parameter("embed", glorot_uniform(v, e, rng));
  for (std::size_t d = 0; d < e; ++d) m.embed_.value.at(Vocabulary::kPad, d) = 0.0;

  m.lstm_w_ = Parameter("lstm.w", glorot_uniform(e + c + h, 4 * h, rng));
  m.lstm_b_ = Parameter("lstm.b", Tensor::zeros({4 * h}));
  for (std::size_t i = h; i < 2 * h; ++i) m.lstm_b_.value[i] = 1.0;  // forget gate stabilizer

  m.attn_w_ = Parameter("attn.w", glorot_uniform(h, c, rng));
  if (cfg.variant == AttentionVariant::kLocal) {
    m.attn_wp_ = Parameter("attn.wp", glorot_uniform(h, h, rng));
    m.attn_vp_ = Parameter("attn.vp", glorot_uniform(h, 1, rng));
  }
  m.init_wh_ = Parameter("init.wh", glorot_uniform(c, h, rng));
  m.init_wc_ = Parameter("init.wc", glorot_uniform(c, h, rng));
  m.out_w_ = Parameter("out.w", glorot_uniform(h, v, rng));
  m.out_b_ = Parameter("out.b", Tensor::zeros({v}));
  return m;
}

std::vector<Parameter*> Captioner::params() {
  std::vector<Parameter*> out = {&embed_, &lstm_w_, &lstm_b_, &attn_w_};
  if (cfg_.variant == AttentionVariant::kLocal) {
    out.push_back(&attn_wp_);
    out.push_back(&attn_vp_);
  }
  out.push_back(&init_wh_);
  out.push_back(&init_wc_);
  out.push_back(&out_w_);
  out.push_back(&out_b_);
  return out;
}

std::size_t Captioner::param_count() const {
  std::size_t n = embed_.value.numel() + lstm_w_.value.numel() + lstm_b_.value.numel() +
                  attn_w_.value.numel() + init_wh_.value.numel() + init_wc_.value.numel() +
                  out_w_.value.numel() + out_b_.value.numel();
  if (cfg_.variant == AttentionVariant::kLocal) {
    n += attn_wp_.value.numel() + attn_vp_.value.numel();
  }
  return n;
}

Captioner::Bound Captioner::bind(Tape& tape) {
  Bound b;
  b.embed = tape.param(embed_);
  b.lstm_w = tape.param(lstm_w_);
  b.lstm_b = tape.param(lstm_b_);
  b.attn_w = tape.param(attn_w_);
  if (cfg_.variant == AttentionVariant::kLocal) {
    b.attn_wp = tape.param(attn_wp_);
    b.attn_vp = tape.param(attn_vp_);
  }
  b.init_wh = tape.param(init_wh_);
  b.init_wc = tape.param(init_wc_);
  b.out_w = tape.param(out_w_);
  b.out_b = tape.param(out_b_);
  return b;
}

Captioner::State Captioner::init_state(Tape& tape, const Bound& b, Var features) const {
  const Tensor& f = tape.value(features);
  if (f.cols() != cfg_.channels) {
    throw DataError("captioner: feature depth " + std::to_string(f.cols()) +
                    " does not match model channels " + std::to_string(cfg_.channels));
  }
  Var mean = tape.mean_rows(features);
  Var h = tape.tanh(tape.matmul(mean, b.init_wh));
  Var c = tape.tanh(tape.matmul(mean, b.init_wc));
  return {h, c};
}

AttentionOut Captioner::attend_global(Tape& tape, const Bound& b, Var h, Var features) const {
  Var proj = tape.matmul(h, b.attn_w);                // [1, C]
  Var scores = tape.matmul(proj, tape.transpose(features));  // [1, S]
  Var weights = tape.softmax(scores);
  Var context = tape.matmul(weights, features);
  return {context, weights, 0};
}

AttentionOut Captioner::attend_local(Tape& tape, const Bound& b, Var h, Var features) const {
  const std::size_t s = tape.value(features).rows();
  Var u = tape.tanh(tape.matmul(h, b.attn_wp));
  Var raw = tape.matmul(u, b.attn_vp);  // [1, 1]
  Var center = tape.scale(tape.sigmoid(raw), static_cast<double>(s));
  const double sigma = static_cast<double>(cfg_.window) / 2.0;
  return local_attention_at(tape, b, h, features, center, sigma, cfg_.window);
}

AttentionOut Captioner::local_attention_at(Tape& tape, const Bound& b, Var h, Var features,
                                           Var center, double sigma, std::size_t window) const {
  if (window < 1) throw std::invalid_argument("local attention: window must be >= 1");
  const std::size_t s = tape.value(features).rows();
  const double p = tape.value(center)[0];
  const double d = static_cast<double>(window);
  const long lo_raw = static_cast<long>(std::ceil(p - d));
  const long hi_raw = static_cast<long>(std::floor(p + d));
  const std::size_t lo =
      static_cast<std::size_t>(std::clamp<long>(lo_raw, 0, static_cast<long>(s) - 1));
  const std::size_t hi =
      static_cast<std::size_t>(std::clamp<long>(hi_raw, 0, static_cast<long>(s) - 1));
  const std::size_t len = hi - lo + 1;

  Var window_feats = len == s ? features : tape.slice(features, 0, lo, len);
  Var proj = tape.matmul(h, b.attn_w);
  Var scores = tape.matmul(proj, tape.transpose(window_feats));  // [1, len]
  Var base = tape.softmax(scores);

  std::vector<double> pos(len);
  for (std::size_t i = 0; i < len; ++i) pos[i] = static_cast<double>(lo + i);
  Var positions = tape.constant(Tensor::row(std::move(pos)));
  Var diff = tape.sub(positions, center);  // center broadcasts as a scalar
  Var gauss = tape.exp(tape.scale(tape.mul(diff, diff), -1.0 / (2.0 * sigma * sigma)));
  Var weighted = tape.mul(base, gauss);
  Var weights = tape.div(weighted, tape.sum(weighted));
  Var context = tape.matmul(weights, window_feats);
  return {context, weights, lo};
}

AttentionOut Captioner::attend(Tape& tape, const Bound& b, Var h, Var features) const {
  return cfg_.variant == AttentionVariant::kGlobal ? attend_global(tape, b, h, features)
                                                   : attend_local(tape, b, h, features);
}

Var Captioner::lstm_step(Tape& tape, const Bound& b, State& state, Var word_embedding,
                         Var context, bool train) const {
  const std::size_t h = cfg_.hidden_dim;
  const Var parts[] = {word_embedding, context, state.h};
  Var x = tape.concat(parts, 1);
  Var gates = tape.add(tape.matmul(x, b.lstm_w), b.lstm_b);
  Var gi = tape.sigmoid(tape.slice(gates, 1, 0, h));
  Var gf = tape.sigmoid(tape.slice(gates, 1, h, h));
  Var go = tape.sigmoid(tape.slice(gates, 1, 2 * h, h));
  Var gc = tape.tanh(tape.slice(gates, 1, 3 * h, h));
  Var c_new = tape.add(tape.mul(gf, state.c), tape.mul(gi, gc));
  Var h_new = tape.mul(go, tape.tanh(c_new));
  state = {h_new, c_new};
  Var h_out = tape.dropout(h_new, cfg_.dropout, train);
  return tape.add(tape.matmul(h_out, b.out_w), b.out_b);
}

std::vector<int> Captioner::teacher_inputs(std::span<const int> gold) {
  std::vector<int> in;
  in.reserve(gold.size() + 1);
  in.push_back(Vocabulary::kStart);
  in.insert(in.end(), gold.begin(), gold.end());
  return in;
}

Var Captioner::train_loss(Tape& tape, std::span<const FeatureMapSet* const> features,
                          std::span<const std::vector<int>> gold, bool train) {
  if (features.empty() || features.size() != gold.size()) {
    throw DataError("captioner train step: empty or mismatched batch");
  }
  const Bound b = bind(tape);
  std::size_t steps = 0;
  for (const auto& g : gold) steps = std::max(steps, g.size() + 1);  // +1 for END

  std::vector<Var> all_logits;
  std::vector<int> all_targets;
  all_logits.reserve(features.size() * steps);
  all_targets.reserve(features.size() * steps);

  for (std::size_t i = 0; i < features.size(); ++i) {
    std::vector<int> inputs = teacher_inputs(gold[i]);
    std::vector<int> targets(gold[i].begin(), gold[i].end());
    targets.push_back(Vocabulary::kEnd);
    inputs.resize(steps, Vocabulary::kPad);
    targets.resize(steps, Vocabulary::kPad);

    Var feats = tape.constant(features[i]->features);
    State state = init_state(tape, b, feats);
    Var emb_all = tape.embedding_rows(b.embed, inputs);
    for (std::size_t t = 0; t < steps; ++t) {
      Var emb_t = tape.slice(emb_all, 0, t, 1);
      AttentionOut att = attend(tape, b, state.h, feats);
      all_logits.push_back(lstm_step(tape, b, state, emb_t, att.context, train));
    }
    all_targets.insert(all_targets.end(), targets.begin(), targets.end());
  }
  Var logits = tape.concat(all_logits, 0);
  return tape.cross_entropy(logits, std::move(all_targets), Vocabulary::kPad);
}

StepFn Captioner::step_fn(const FeatureMapSet& features) {
  struct GenContext {
    Tape tape;
    Var feats;
    Bound bound;
    std::map<std::vector<int>, State> states;
  };
  auto ctx = std::make_shared<GenContext>();
  ctx->feats = ctx->tape.constant(features.features);
  ctx->bound = bind(ctx->tape);

  Captioner* self = this;
  return [self, ctx](const std::vector<int>& prefix) -> std::vector<double> {
    Tape& tape = ctx->tape;
    const Bound& b = ctx->bound;
    State state{};
    if (prefix.size() == 1) {
      state = self->init_state(tape, b, ctx->feats);
    } else {
      const std::vector<int> parent(prefix.begin(), prefix.end() - 1);
      auto it = ctx->states.find(parent);
      if (it != ctx->states.end()) {
        state = it->second;
      } else {
        // decoders extend one token at a time, but replay from scratch if not
        state = self->init_state(tape, b, ctx->feats);
        for (std::size_t t = 0; t + 1 < prefix.size(); ++t) {
          AttentionOut att = self->attend(tape, b, state.h, ctx->feats);
          Var emb = tape.embedding_rows(b.embed, {prefix[t]});
          self->lstm_step(tape, b, state, emb, att.context, false);
        }
      }
    }
    AttentionOut att = self->attend(tape, b, state.h, ctx->feats);
    Var emb = tape.embedding_rows(b.embed, {prefix.back()});
    Var logits = self->lstm_step(tape, b, state, emb, att.context, false);
    ctx->states[prefix] = state;
    return log_softmax_row(tape.value(logits));
  };
}

std::vector<int> Captioner::generate(const FeatureMapSet& features, const DecodeConfig& decode) {
  DecodeConfig cfg = decode;
  cfg.max_len = std::min(cfg.max_len, cfg_.max_len);
  const StepFn fn = step_fn(features);
  return cfg.beam_width > 1 ? beam_search(fn, cfg) : greedy_decode(fn, cfg);
}

Checkpoint Captioner::to_checkpoint(const Vocabulary& vocab) const {
  Checkpoint ckpt;
  ckpt.kind = ModelKind::kCaptioner;
  ckpt.vocab = vocab;
  ckpt.hyper["variant"] = cfg_.variant == AttentionVariant::kLocal ? 1.0 : 0.0;
  ckpt.hyper["vocab_size"] = static_cast<double>(cfg_.vocab_size);
  ckpt.hyper["embed_dim"] = static_cast<double>(cfg_.embed_dim);
  ckpt.hyper["hidden_dim"] = static_cast<double>(cfg_.hidden_dim);
  ckpt.hyper["channels"] = static_cast<double>(cfg_.channels);
  ckpt.hyper["window"] = static_cast<double>(cfg_.window);
  ckpt.hyper["max_len"] = static_cast<double>(cfg_.max_len);
  ckpt.hyper["dropout"] = cfg_.dropout;
  for (Parameter* p : const_cast<Captioner*>(this)->params()) {
    ckpt.tensors.emplace_back(p->name, p->value);
  }
  return ckpt;
}

Captioner Captioner::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::kCaptioner) {
    throw CheckpointError("checkpoint is not a captioner model");
  }
  CaptionerConfig cfg;
  cfg.variant = ckpt.hyper_at("variant") != 0.0 ? AttentionVariant::kLocal
                                                : AttentionVariant::kGlobal;
  cfg.vocab_size = static_cast<std::size_t>(ckpt.hyper_at("vocab_size"));
  cfg.embed_dim = static_cast<std::size_t>(ckpt.hyper_at("embed_dim"));
  cfg.hidden_dim = static_cast<std::size_t>(ckpt.hyper_at("hidden_dim"));
  cfg.channels = static_cast<std::size_t>(ckpt.hyper_at("channels"));
  cfg.window = static_cast<std::size_t>(ckpt.hyper_at("window"));
  cfg.max_len = static_cast<std::size_t>(ckpt.hyper_at("max_len"));
  cfg.dropout = ckpt.hyper_at("dropout");
  if (ckpt.vocab.size() != cfg.vocab_size) {
    throw CheckpointError("checkpoint vocabulary has " + std::to_string(ckpt.vocab.size()) +
                          " tokens, hyperparameters say " + std::to_string(cfg.vocab_size));
  }

  SplitMix64 throwaway(0);
  Captioner m = init(cfg, throwaway);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, tensor] : ckpt.tensors) by_name[name] = &tensor;
  for (Parameter* p : m.params()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      throw CheckpointError("checkpoint missing tensor '" + p->name + "'");
    }
    if (it->second->shape() != p->value.shape()) {
      throw CheckpointError("checkpoint tensor '" + p->name + "' has shape " +
                            shape_str(it->second->shape()) + ", expected " +
                            shape_str(p->value.shape()));
    }
    p->value = *it->second;
  }
  return m;
}

}  // namespace catnet
