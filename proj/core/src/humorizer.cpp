#include "catnet/humorizer.hpp"

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

std::vector<double> log_softmax_row(const Tensor& row) {
  const std::size_t n = row.numel();
  std::vector<double> out(n);
  double mx = row[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(row[i] - mx);
  const double lse = mx + std::log(z);
  for (std::size_t i = 0; i < n; ++i) out[i] = row[i] - lse;
  return out;
}

std::vector<std::uint8_t> pad_keep_mask(std::size_t q_len, std::span<const int> keys) {
  std::vector<std::uint8_t> keep(q_len * keys.size());
  for (std::size_t j = 0; j < keys.size(); ++j) {
    const std::uint8_t k = keys[j] != Vocabulary::kPad ? 1 : 0;
    for (std::size_t t = 0; t < q_len; ++t) keep[t * keys.size() + j] = k;
  }
  return keep;
}

std::vector<std::uint8_t> causal_pad_keep_mask(std::span<const int> tokens) {
  const std::size_t n = tokens.size();
  std::vector<std::uint8_t> keep(n * n, 0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j <= t; ++j) {
      keep[t * n + j] = tokens[j] != Vocabulary::kPad ? 1 : 0;
    }
  }
  return keep;
}

}  // namespace

Tensor positional_encoding(std::size_t max_len, std::size_t d_model) {
  if (d_model % 2 != 0) {
    throw std::invalid_argument("positional_encoding: d_model must be even, got " +
                                std::to_string(d_model));
  }
  Tensor pe({max_len, d_model});
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double rate = std::pow(10000.0, 2.0 * static_cast<double>(i) /
                                                static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) / rate;
      pe.at(pos, 2 * i) = std::sin(angle);
      pe.at(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Var scaled_dot_attention(Tape& tape, Var q, Var k, Var v,
                         const std::vector<std::uint8_t>* keep) {
  const std::size_t d_k = tape.value(q).cols();
  if (tape.value(k).cols() != d_k) {
    throw std::invalid_argument("scaled_dot_attention: query depth " + std::to_string(d_k) +
                                " != key depth " + std::to_string(tape.value(k).cols()));
  }
  Var scores = tape.scale(tape.matmul(q, tape.transpose(k)),
                          1.0 / std::sqrt(static_cast<double>(d_k)));
  Var weights = keep != nullptr ? tape.masked_softmax(scores, *keep) : tape.softmax(scores);
  return tape.matmul(weights, v);
}

Humorizer Humorizer::init(const HumorizerConfig& cfg, SplitMix64& rng,
                          const EmbeddingTable* pretrained) {
  if (cfg.vocab_size <= Vocabulary::kReservedCount) {
    throw DataError("humorizer: vocabulary too small (" + std::to_string(cfg.vocab_size) + ")");
  }
  if (cfg.d_model % cfg.heads != 0) {
    throw DataError("humorizer: d_model " + std::to_string(cfg.d_model) +
                    " not divisible by heads " + std::to_string(cfg.heads));
  }
  if (cfg.d_model % 2 != 0) {
    throw DataError("humorizer: d_model must be even");
  }
  if (cfg.max_len < 2) {
    throw DataError("humorizer: max_len must be >= 2");
  }

  Humorizer m;
  m.cfg_ = cfg;
  const std::size_t d = cfg.d_model, f = cfg.d_ff, v = cfg.vocab_size;
  std::size_t e = cfg.embed_dim == 0 ? d : cfg.embed_dim;
  if (pretrained != nullptr) {
    if (pretrained->rows.rows() != v) {
      throw DataError("humorizer: pretrained embedding rows " +
                      std::to_string(pretrained->rows.rows()) + " != vocabulary size " +
                      std::to_string(v));
    }
    e = pretrained->dim;
  }
  m.cfg_.embed_dim = e;

  if (pretrained != nullptr) {
    m.embed_ = Parameter("embed", pretrained->rows);
  } else {
    m.embed_ = Parameter("embed", glorot_uniform(v, e, rng));
    for (std::size_t i = 0; i < e; ++i) m.embed_.value.at(Vocabulary::kPad, i) = 0.0;
  }
  if (e != d) {
    m.adapter_ = Parameter("adapter.w", glorot_uniform(e, d, rng));
  }

  auto make_layer = [&](const std::string& prefix, bool with_cross) {
    LayerParams lp;
    lp.wq = Parameter(prefix + ".self.wq", glorot_uniform(d, d, rng));
    lp.wk = Parameter(prefix + ".self.wk", glorot_uniform(d, d, rng));
    lp.wv = Parameter(prefix + ".self.wv", glorot_uniform(d, d, rng));
    lp.wo = Parameter(prefix + ".self.wo", glorot_uniform(d, d, rng));
    if (with_cross) {
      lp.cq = Parameter(prefix + ".cross.wq", glorot_uniform(d, d, rng));
      lp.ck = Parameter(prefix + ".cross.wk", glorot_uniform(d, d, rng));
      lp.cv = Parameter(prefix + ".cross.wv", glorot_uniform(d, d, rng));
      lp.co = Parameter(prefix + ".cross.wo", glorot_uniform(d, d, rng));
    }
    lp.ff_w1 = Parameter(prefix + ".ff.w1", glorot_uniform(d, f, rng));
    lp.ff_b1 = Parameter(prefix + ".ff.b1", Tensor::zeros({f}));
    lp.ff_w2 = Parameter(prefix + ".ff.w2", glorot_uniform(f, d, rng));
    lp.ff_b2 = Parameter(prefix + ".ff.b2", Tensor::zeros({d}));
    lp.ln1_g = Parameter(prefix + ".ln1.g", Tensor::full({d}, 1.0));
    lp.ln1_b = Parameter(prefix + ".ln1.b", Tensor::zeros({d}));
    lp.ln2_g = Parameter(prefix + ".ln2.g", Tensor::full({d}, 1.0));
    lp.ln2_b = Parameter(prefix + ".ln2.b", Tensor::zeros({d}));
    if (with_cross) {
      lp.ln3_g = Parameter(prefix + ".ln3.g", Tensor::full({d}, 1.0));
      lp.ln3_b = Parameter(prefix + ".ln3.b", Tensor::zeros({d}));
    }
    return lp;
  };

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    m.enc_.push_back(make_layer("enc" + std::to_string(l), false));
  }
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    m.dec_.push_back(make_layer("dec" + std::to_string(l), true));
  }
  m.out_w_ = Parameter("out.w", glorot_uniform(d, v, rng));
  m.out_b_ = Parameter("out.b", Tensor::zeros({v}));
  m.pos_enc_ = positional_encoding(cfg.max_len, d);

  if (m.param_count() != expected_param_count(m.cfg_)) {
    throw std::logic_error("humorizer: parameter count " + std::to_string(m.param_count()) +
                           " does not match the closed form " +
                           std::to_string(expected_param_count(m.cfg_)));
  }
  return m;
}

std::vector<Parameter*> Humorizer::params() {
  std::vector<Parameter*> out;
  out.push_back(&embed_);
  if (adapter_) out.push_back(&*adapter_);
  auto push_layer = [&out](LayerParams& lp, bool with_cross) {
    out.push_back(&lp.wq);
    out.push_back(&lp.wk);
    out.push_back(&lp.wv);
    out.push_back(&lp.wo);
    if (with_cross) {
      out.push_back(&lp.cq);
      out.push_back(&lp.ck);
      out.push_back(&lp.cv);
      out.push_back(&lp.co);
    }
    out.push_back(&lp.ff_w1);
    out.push_back(&lp.ff_b1);
    out.push_back(&lp.ff_w2);
    out.push_back(&lp.ff_b2);
    out.push_back(&lp.ln1_g);
    out.push_back(&lp.ln1_b);
    out.push_back(&lp.ln2_g);
    out.push_back(&lp.ln2_b);
    if (with_cross) {
      out.push_back(&lp.ln3_g);
      out.push_back(&lp.ln3_b);
    }
  };
  for (LayerParams& lp : enc_) push_layer(lp, false);
  for (LayerParams& lp : dec_) push_layer(lp, true);
  out.push_back(&out_w_);
  out.push_back(&out_b_);
  return out;
}

std::size_t Humorizer::param_count() const {
  std::size_t n = 0;
  for (Parameter* p : const_cast<Humorizer*>(this)->params()) n += p->value.numel();
  return n;
}

std::size_t Humorizer::expected_param_count(const HumorizerConfig& cfg) {
  const std::size_t d = cfg.d_model, f = cfg.d_ff, v = cfg.vocab_size, l = cfg.layers;
  const std::size_t e = cfg.embed_dim == 0 ? d : cfg.embed_dim;
  std::size_t n = v * e;
  if (e != d) n += e * d;
  n += l * (4 * d * d + 2 * d * f + f + 5 * d);  // encoder layers
  n += l * (8 * d * d + 2 * d * f + f + 7 * d);  // decoder layers
  n += d * v + v;
  return n;
}

Humorizer::Bound Humorizer::bind(Tape& tape) {
  Bound b;
  b.embed = tape.param(embed_);
  if (adapter_) {
    b.adapter = tape.param(*adapter_);
    b.has_adapter = true;
  }
  auto bind_layer = [&tape](LayerParams& lp, bool with_cross) {
    LayerBound lb;
    lb.wq = tape.param(lp.wq);
    lb.wk = tape.param(lp.wk);
    lb.wv = tape.param(lp.wv);
    lb.wo = tape.param(lp.wo);
    if (with_cross) {
      lb.cq = tape.param(lp.cq);
      lb.ck = tape.param(lp.ck);
      lb.cv = tape.param(lp.cv);
      lb.co = tape.param(lp.co);
    }
    lb.ff_w1 = tape.param(lp.ff_w1);
    lb.ff_b1 = tape.param(lp.ff_b1);
    lb.ff_w2 = tape.param(lp.ff_w2);
    lb.ff_b2 = tape.param(lp.ff_b2);
    lb.ln1_g = tape.param(lp.ln1_g);
    lb.ln1_b = tape.param(lp.ln1_b);
    lb.ln2_g = tape.param(lp.ln2_g);
    lb.ln2_b = tape.param(lp.ln2_b);
    if (with_cross) {
      lb.ln3_g = tape.param(lp.ln3_g);
      lb.ln3_b = tape.param(lp.ln3_b);
    }
    return lb;
  };
  for (LayerParams& lp : enc_) b.enc.push_back(bind_layer(lp, false));
  for (LayerParams& lp : dec_) b.dec.push_back(bind_layer(lp, true));
  b.out_w = tape.param(out_w_);
  b.out_b = tape.param(out_b_);
  return b;
}

Var Humorizer::embed_sequence(Tape& tape, const Bound& b, std::span<const int> ids,
                              bool train) const {
  Var x = tape.embedding_rows(b.embed, std::vector<int>(ids.begin(), ids.end()));
  if (b.has_adapter) x = tape.matmul(x, b.adapter);
  x = tape.scale(x, std::sqrt(static_cast<double>(cfg_.d_model)));
  if (cfg_.use_positional) {
    Tensor pe({ids.size(), cfg_.d_model});
    std::copy(pos_enc_.data(), pos_enc_.data() + ids.size() * cfg_.d_model, pe.data());
    x = tape.add(x, tape.constant(std::move(pe)));
  }
  return tape.dropout(x, cfg_.dropout, train);
}

Var Humorizer::attention_block(Tape& tape, Var q_in, Var kv_in, Var wq, Var wk, Var wv, Var wo,
                               const std::vector<std::uint8_t>& keep, bool train) const {
  const std::size_t d_k = cfg_.d_model / cfg_.heads;
  Var q = tape.matmul(q_in, wq);
  Var k = tape.matmul(kv_in, wk);
  Var v = tape.matmul(kv_in, wv);
  std::vector<Var> heads;
  heads.reserve(cfg_.heads);
  for (std::size_t h = 0; h < cfg_.heads; ++h) {
    Var qh = tape.slice(q, 1, h * d_k, d_k);
    Var kh = tape.slice(k, 1, h * d_k, d_k);
    Var vh = tape.slice(v, 1, h * d_k, d_k);
    Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)),
                            1.0 / std::sqrt(static_cast<double>(d_k)));
    Var weights = tape.masked_softmax(scores, keep);
    weights = tape.dropout(weights, cfg_.dropout, train);
    heads.push_back(tape.matmul(weights, vh));
  }
  Var merged = cfg_.heads == 1 ? heads[0] : tape.concat(heads, 1);
  return tape.matmul(merged, wo);
}

Var Humorizer::feed_forward(Tape& tape, const LayerBound& lb, Var x, bool /*train*/) const {
  Var hidden = tape.relu(tape.add(tape.matmul(x, lb.ff_w1), lb.ff_b1));
  return tape.add(tape.matmul(hidden, lb.ff_w2), lb.ff_b2);
}

Var Humorizer::add_norm(Tape& tape, Var residual, Var sub, Var gain, Var bias,
                        bool train) const {
  Var summed = tape.add(residual, tape.dropout(sub, cfg_.dropout, train));
  Var normed = tape.layer_norm(summed);
  return tape.add(tape.mul(normed, gain), bias);
}

Var Humorizer::encode(Tape& tape, const Bound& b, std::span<const int> src, bool train) const {
  if (src.empty()) throw DataError("humorizer encode: empty source sequence");
  if (src.size() > cfg_.max_len) {
    throw DataError("humorizer encode: sequence length " + std::to_string(src.size()) +
                    " exceeds max_len " + std::to_string(cfg_.max_len));
  }
  Var x = embed_sequence(tape, b, src, train);
  const std::vector<std::uint8_t> keep = pad_keep_mask(src.size(), src);
  for (const LayerBound& lb : b.enc) {
    Var att = attention_block(tape, x, x, lb.wq, lb.wk, lb.wv, lb.wo, keep, train);
    x = add_norm(tape, x, att, lb.ln1_g, lb.ln1_b, train);
    Var ff = feed_forward(tape, lb, x, train);
    x = add_norm(tape, x, ff, lb.ln2_g, lb.ln2_b, train);
  }
  return x;
}

Var Humorizer::decode_logits(Tape& tape, const Bound& b, Var memory, std::span<const int> src,
                             std::span<const int> tgt_prefix, bool train) const {
  if (tgt_prefix.empty()) throw DataError("humorizer decode: empty target prefix");
  if (tgt_prefix.size() > cfg_.max_len) {
    throw DataError("humorizer decode: prefix length " + std::to_string(tgt_prefix.size()) +
                    " exceeds max_len " + std::to_string(cfg_.max_len));
  }
  Var y = embed_sequence(tape, b, tgt_prefix, train);
  const std::vector<std::uint8_t> self_keep = causal_pad_keep_mask(tgt_prefix);
  const std::vector<std::uint8_t> cross_keep = pad_keep_mask(tgt_prefix.size(), src);
  for (const LayerBound& lb : b.dec) {
    Var att = attention_block(tape, y, y, lb.wq, lb.wk, lb.wv, lb.wo, self_keep, train);
    y = add_norm(tape, y, att, lb.ln1_g, lb.ln1_b, train);
    Var cross = attention_block(tape, y, memory, lb.cq, lb.ck, lb.cv, lb.co, cross_keep, train);
    y = add_norm(tape, y, cross, lb.ln2_g, lb.ln2_b, train);
    Var ff = feed_forward(tape, lb, y, train);
    y = add_norm(tape, y, ff, lb.ln3_g, lb.ln3_b, train);
  }
  return tape.add(tape.matmul(y, b.out_w), b.out_b);
}

Var Humorizer::train_loss(Tape& tape,
                          std::span<const std::pair<std::vector<int>, std::vector<int>>> batch,
                          bool train) {
  if (batch.empty()) throw DataError("humorizer train step: empty batch");
  const Bound b = bind(tape);
  std::size_t max_src = 0, max_tgt = 0;
  for (const auto& [src, tgt] : batch) {
    if (src.empty() || tgt.empty()) throw DataError("humorizer train step: empty pair side");
    max_src = std::max(max_src, src.size());
    max_tgt = std::max(max_tgt, tgt.size() + 1);  // +1 for END
  }

  std::vector<Var> all_logits;
  std::vector<int> all_targets;
  for (const auto& [src, tgt] : batch) {
    std::vector<int> src_padded(src);
    src_padded.resize(max_src, Vocabulary::kPad);

    std::vector<int> inputs;
    inputs.reserve(max_tgt);
    inputs.push_back(Vocabulary::kStart);
    inputs.insert(inputs.end(), tgt.begin(), tgt.end());
    inputs.resize(max_tgt, Vocabulary::kPad);

    std::vector<int> targets(tgt);
    targets.push_back(Vocabulary::kEnd);
    targets.resize(max_tgt, Vocabulary::kPad);

    Var memory = encode(tape, b, src_padded, train);
    all_logits.push_back(decode_logits(tape, b, memory, src_padded, inputs, train));
    all_targets.insert(all_targets.end(), targets.begin(), targets.end());
  }
  Var logits = all_logits.size() == 1 ? all_logits[0] : tape.concat(all_logits, 0);
  return tape.cross_entropy(logits, std::move(all_targets), Vocabulary::kPad);
}

StepFn Humorizer::step_fn(std::span<const int> src) {
  struct GenContext {
    Tape tape;
    Bound bound;
    std::vector<int> src;
    Var memory;
  };
  auto ctx = std::make_shared<GenContext>();
  ctx->src.assign(src.begin(), src.end());
  ctx->bound = bind(ctx->tape);
  ctx->memory = encode(ctx->tape, ctx->bound, ctx->src, false);

  Humorizer* self = this;
  return [self, ctx](const std::vector<int>& prefix) -> std::vector<double> {
    Tape& tape = ctx->tape;
    Var logits = self->decode_logits(tape, ctx->bound, ctx->memory, ctx->src, prefix, false);
    Var last = tape.slice(logits, 0, prefix.size() - 1, 1);
    return log_softmax_row(tape.value(last));
  };
}

std::vector<int> Humorizer::translate(std::span<const int> src, const DecodeConfig& decode) {
  DecodeConfig cfg = decode;
  // the prefix includes START, so content length stays under max_len
  cfg.max_len = std::min(cfg.max_len, cfg_.max_len - 1);
  const StepFn fn = step_fn(src);
  return cfg.beam_width > 1 ? beam_search(fn, cfg) : greedy_decode(fn, cfg);
}

std::string Humorizer::funnify(const std::string& sentence, const Vocabulary& vocab,
                               const DecodeConfig& decode) {
  const std::vector<std::string> tokens = tokenize(sentence);
  if (tokens.empty()) return "";
  std::vector<int> src = vocab.encode(tokens, false);
  if (src.size() > cfg_.max_len) src.resize(cfg_.max_len);
  const std::vector<int> out = translate(src, decode);
  return join_tokens(vocab.decode(out));
}

Checkpoint Humorizer::to_checkpoint(const Vocabulary& vocab) const {
  Checkpoint ckpt;
  ckpt.kind = ModelKind::kHumorizer;
  ckpt.vocab = vocab;
  ckpt.hyper["vocab_size"] = static_cast<double>(cfg_.vocab_size);
  ckpt.hyper["layers"] = static_cast<double>(cfg_.layers);
  ckpt.hyper["heads"] = static_cast<double>(cfg_.heads);
  ckpt.hyper["d_model"] = static_cast<double>(cfg_.d_model);
  ckpt.hyper["d_ff"] = static_cast<double>(cfg_.d_ff);
  ckpt.hyper["max_len"] = static_cast<double>(cfg_.max_len);
  ckpt.hyper["dropout"] = cfg_.dropout;
  ckpt.hyper["embed_dim"] = static_cast<double>(cfg_.embed_dim);
  ckpt.hyper["use_positional"] = cfg_.use_positional ? 1.0 : 0.0;
  for (Parameter* p : const_cast<Humorizer*>(this)->params()) {
    ckpt.tensors.emplace_back(p->name, p->value);
  }
  return ckpt;
}

Humorizer Humorizer::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::kHumorizer) {
    throw CheckpointError("checkpoint is not a humorizer model");
  }
  HumorizerConfig cfg;
  cfg.vocab_size = static_cast<std::size_t>(ckpt.hyper_at("vocab_size"));
  cfg.layers = static_cast<std::size_t>(ckpt.hyper_at("layers"));
  cfg.heads = static_cast<std::size_t>(ckpt.hyper_at("heads"));
  cfg.d_model = static_cast<std::size_t>(ckpt.hyper_at("d_model"));
  cfg.d_ff = static_cast<std::size_t>(ckpt.hyper_at("d_ff"));
  cfg.max_len = static_cast<std::size_t>(ckpt.hyper_at("max_len"));
  cfg.dropout = ckpt.hyper_at("dropout");
  cfg.embed_dim = static_cast<std::size_t>(ckpt.hyper_at("embed_dim"));
  cfg.use_positional = ckpt.hyper_at("use_positional") != 0.0;
  if (ckpt.vocab.size() != cfg.vocab_size) {
    throw CheckpointError("checkpoint vocabulary has " + std::to_string(ckpt.vocab.size()) +
                          " tokens, hyperparameters say " + std::to_string(cfg.vocab_size));
  }

  SplitMix64 throwaway(0);
  Humorizer m = init(cfg, throwaway);
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
