#include "catnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include "catnet/errors.hpp"
#include "catnet/features.hpp"
#include "catnet/optim.hpp"

namespace catnet {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void zero_pad_embedding_grad(Parameter& embed) {
  const std::size_t cols = embed.value.cols();
  for (std::size_t d = 0; d < cols; ++d) embed.grad[Vocabulary::kPad * cols + d] = 0.0;
}

CaptionerConfig captioner_config(const RunConfig& cfg, std::size_t vocab_size) {
  CaptionerConfig c;
  c.variant = cfg.model.variant;
  c.vocab_size = vocab_size;
  c.embed_dim = cfg.model.embed_dim;
  c.hidden_dim = cfg.model.hidden_dim;
  c.channels = cfg.model.channels;
  c.window = cfg.model.window;
  c.max_len = cfg.model.max_caption_len;
  c.dropout = cfg.model.dropout;
  return c;
}

HumorizerConfig humorizer_config(const RunConfig& cfg, std::size_t vocab_size) {
  HumorizerConfig c;
  c.vocab_size = vocab_size;
  c.layers = cfg.model.layers;
  c.heads = cfg.model.heads;
  c.d_model = cfg.model.d_model;
  c.d_ff = cfg.model.d_ff;
  c.max_len = cfg.model.max_pair_len;
  c.dropout = cfg.model.dropout;
  return c;
}

void require_path(const std::string& path, const char* what) {
  if (path.empty()) throw DataError(std::string("config: [data] ") + what + " path is required");
  if (!std::filesystem::exists(path)) {
    throw DataError(std::string(what) + " file not found: " + path);
  }
}

struct EpochRunner {
  std::size_t batch_size;
  SplitMix64* rng;

  // Shuffled batch index lists for one epoch.
  std::vector<std::vector<std::size_t>> batches(std::size_t n) const {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng->shuffle(order);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; i += batch_size) {
      out.emplace_back(order.begin() + static_cast<long>(i),
                       order.begin() + static_cast<long>(std::min(n, i + batch_size)));
    }
    return out;
  }
};

}  // namespace

const char* phase_name(HumorPhase phase) {
  return phase == HumorPhase::kPretrain ? "pretrain" : "finetune";
}

TrainResult train_caption(const RunConfig& cfg, const TrainOptions& opts, std::ostream& log,
                          std::ostream& info) {
  require_path(cfg.data.features, "features");
  require_path(cfg.data.captions, "captions");
  require_path(cfg.data.vocab, "vocab");
  std::filesystem::create_directories(opts.out_dir);

  const Vocabulary vocab = Vocabulary::load(cfg.data.vocab);
  const std::vector<FeatureMapSet> features = read_feature_file(cfg.data.features);
  std::map<std::string, const FeatureMapSet*> by_id;
  for (const FeatureMapSet& f : features) {
    if (f.channels != cfg.model.channels) {
      throw DataError("features for '" + f.image_id + "' have " + std::to_string(f.channels) +
                      " channels, config says " + std::to_string(cfg.model.channels));
    }
    by_id[f.image_id] = &f;
  }

  TrainResult result;
  std::vector<const FeatureMapSet*> ex_features;
  std::vector<std::vector<int>> ex_gold;
  for (const CaptionRow& row : read_caption_file(cfg.data.captions)) {
    auto it = by_id.find(row.image_id);
    if (it == by_id.end()) {
      ++result.skipped;
      continue;
    }
    std::vector<int> ids = vocab.encode(tokenize(row.caption), false);
    if (ids.empty()) {
      ++result.skipped;
      continue;
    }
    if (ids.size() > cfg.model.max_caption_len) ids.resize(cfg.model.max_caption_len);
    ex_features.push_back(it->second);
    ex_gold.push_back(std::move(ids));
  }
  if (result.skipped > 0) {
    info << "warning: skipped " << result.skipped << " caption rows (missing features or empty)\n";
  }
  if (ex_features.empty()) throw DataError("no trainable (features, caption) pairs");

  SplitMix64 rng(cfg.training.seed);
  Captioner model = [&] {
    if (!cfg.data.embeddings.empty()) {
      require_path(cfg.data.embeddings, "embeddings");
      EmbeddingTable table =
          load_embeddings(cfg.data.embeddings, vocab, cfg.model.embed_dim, rng);
      info << "embeddings: coverage " << table.coverage * 100 << "% of non-reserved vocab\n";
      Captioner m = Captioner::init(captioner_config(cfg, vocab.size()), rng);
      for (Parameter* p : m.params()) {
        if (p->name == "embed") p->value = table.rows;
      }
      return m;
    }
    return Captioner::init(captioner_config(cfg, vocab.size()), rng);
  }();
  if (cfg.training.freeze_embeddings) {
    for (Parameter* p : model.params()) {
      if (p->name == "embed") p->trainable = false;
    }
  }

  AdamOptimizer opt({.lr = cfg.training.lr});
  const std::vector<Parameter*> params = model.params();
  const EpochRunner runner{cfg.training.batch_size, &rng};
  const auto t0 = Clock::now();

  double best_loss = std::numeric_limits<double>::infinity();
  const auto ckpt_path = [&](const std::string& tag) {
    return opts.out_dir / ("caption." + tag + "catc");
  };
  result.best_checkpoint = opts.out_dir / "caption.best.catc";
  result.final_checkpoint = opts.out_dir / "caption.catc";

  if (cfg.training.epochs == 0) {
    save_checkpoint(result.final_checkpoint, model.to_checkpoint(vocab));
    save_checkpoint(result.best_checkpoint, model.to_checkpoint(vocab));
    return result;
  }

  std::size_t step = 0;
  double epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.training.epochs; ++epoch) {
    epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (const std::vector<std::size_t>& batch : runner.batches(ex_features.size())) {
      std::vector<const FeatureMapSet*> bf;
      std::vector<std::vector<int>> bg;
      for (std::size_t i : batch) {
        bf.push_back(ex_features[i]);
        bg.push_back(ex_gold[i]);
      }
      opt.zero_grad(params);
      Tape tape(rng.next_u64());
      Var loss = model.train_loss(tape, bf, bg, true);
      tape.backward(loss);
      for (Parameter* p : params) {
        if (p->name == "embed") zero_pad_embedding_grad(*p);
      }
      opt.step(params);
      const double loss_value = tape.value(loss)[0];
      epoch_loss += loss_value;
      ++epoch_steps;
      ++step;
      log << step << '\t' << epoch << "\tcaption\t" << loss_value << '\t' << seconds_since(t0)
          << '\n';
    }
    epoch_loss /= static_cast<double>(epoch_steps);
    info << "epoch " << epoch << " mean loss " << epoch_loss << "\n";
    if (cfg.training.checkpoint_every > 0 && (epoch + 1) % cfg.training.checkpoint_every == 0) {
      save_checkpoint(ckpt_path("epoch" + std::to_string(epoch) + "."),
                      model.to_checkpoint(vocab));
    }
    if (epoch_loss < best_loss) {
      best_loss = epoch_loss;
      save_checkpoint(result.best_checkpoint, model.to_checkpoint(vocab));
    }
  }
  result.steps = step;
  result.final_epoch_loss = epoch_loss;
  save_checkpoint(result.final_checkpoint, model.to_checkpoint(vocab));
  return result;
}

TrainResult train_humor(const RunConfig& cfg, HumorPhase phase, const TrainOptions& opts,
                        std::ostream& log, std::ostream& info) {
  require_path(cfg.data.pairs, "pairs");
  std::filesystem::create_directories(opts.out_dir);
  SplitMix64 rng(cfg.training.seed);

  Vocabulary vocab;
  Humorizer model = [&]() -> Humorizer {
    if (phase == HumorPhase::kFinetune) {
      if (!opts.init_checkpoint) {
        if (!opts.allow_fresh_finetune) {
          throw CheckpointError(
              "finetune requires an init checkpoint (or an explicit fresh-finetune override)");
        }
        info << "finetune from fresh initialization (override in effect)\n";
      } else {
        const Checkpoint ckpt = load_checkpoint(*opts.init_checkpoint);
        Humorizer m = Humorizer::from_checkpoint(ckpt);
        const auto& c = m.config();
        if (c.layers != cfg.model.layers || c.heads != cfg.model.heads ||
            c.d_model != cfg.model.d_model || c.d_ff != cfg.model.d_ff ||
            c.max_len != cfg.model.max_pair_len) {
          throw CheckpointError(
              "finetune architecture mismatch: checkpoint has layers/heads/d_model/d_ff/max_len " +
              std::to_string(c.layers) + "/" + std::to_string(c.heads) + "/" +
              std::to_string(c.d_model) + "/" + std::to_string(c.d_ff) + "/" +
              std::to_string(c.max_len) + ", config wants " + std::to_string(cfg.model.layers) +
              "/" + std::to_string(cfg.model.heads) + "/" + std::to_string(cfg.model.d_model) +
              "/" + std::to_string(cfg.model.d_ff) + "/" +
              std::to_string(cfg.model.max_pair_len));
        }
        vocab = ckpt.vocab;
        if (!cfg.data.vocab.empty()) {
          require_path(cfg.data.vocab, "vocab");
          if (!(Vocabulary::load(cfg.data.vocab) == vocab)) {
            throw DataError("vocabulary mismatch between checkpoint and configured vocab file");
          }
        }
        return m;
      }
    }
    require_path(cfg.data.vocab, "vocab");
    vocab = Vocabulary::load(cfg.data.vocab);
    if (!cfg.data.embeddings.empty()) {
      require_path(cfg.data.embeddings, "embeddings");
      const std::size_t dim = probe_embedding_dim(cfg.data.embeddings);
      EmbeddingTable table = load_embeddings(cfg.data.embeddings, vocab, dim, rng);
      info << "embeddings: dim " << dim << ", coverage " << table.coverage * 100
           << "% of non-reserved vocab"
           << (dim != cfg.model.d_model ? ", adapter inserted\n" : "\n");
      return Humorizer::init(humorizer_config(cfg, vocab.size()), rng, &table);
    }
    return Humorizer::init(humorizer_config(cfg, vocab.size()), rng);
  }();

  TrainResult result;
  std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
  const std::size_t max_src = model.config().max_len;
  const std::size_t max_tgt = model.config().max_len - 1;  // room for START in the prefix
  for (const PairRow& row : read_pair_file(cfg.data.pairs)) {
    std::vector<int> src = vocab.encode(tokenize(row.source), false);
    std::vector<int> tgt = vocab.encode(tokenize(row.target), false);
    if (src.empty() || tgt.empty()) {
      ++result.skipped;
      continue;
    }
    if (src.size() > max_src) src.resize(max_src);
    if (tgt.size() > max_tgt) tgt.resize(max_tgt);
    pairs.emplace_back(std::move(src), std::move(tgt));
  }
  if (result.skipped > 0) {
    info << "warning: skipped " << result.skipped << " empty pair rows\n";
  }
  if (pairs.empty()) throw DataError("no trainable sentence pairs");

  if (cfg.training.freeze_embeddings) {
    for (Parameter* p : model.params()) {
      if (p->name == "embed") p->trainable = false;
    }
  }

  AdamOptimizer opt({.lr = cfg.training.lr});
  const std::vector<Parameter*> params = model.params();
  const EpochRunner runner{cfg.training.batch_size, &rng};
  const auto t0 = Clock::now();
  const std::string prefix = std::string("humor-") + phase_name(phase);

  result.best_checkpoint = opts.out_dir / (prefix + ".best.catc");
  result.final_checkpoint = opts.out_dir / (prefix + ".catc");

  if (cfg.training.epochs == 0) {
    save_checkpoint(result.final_checkpoint, model.to_checkpoint(vocab));
    save_checkpoint(result.best_checkpoint, model.to_checkpoint(vocab));
    return result;
  }

  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t step = 0;
  double epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.training.epochs; ++epoch) {
    epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (const std::vector<std::size_t>& batch : runner.batches(pairs.size())) {
      std::vector<std::pair<std::vector<int>, std::vector<int>>> bp;
      for (std::size_t i : batch) bp.push_back(pairs[i]);
      opt.zero_grad(params);
      Tape tape(rng.next_u64());
      Var loss = model.train_loss(tape, bp, true);
      tape.backward(loss);
      for (Parameter* p : params) {
        if (p->name == "embed") zero_pad_embedding_grad(*p);
      }
      opt.step(params);
      const double loss_value = tape.value(loss)[0];
      epoch_loss += loss_value;
      ++epoch_steps;
      ++step;
      log << step << '\t' << epoch << '\t' << phase_name(phase) << '\t' << loss_value << '\t'
          << seconds_since(t0) << '\n';
    }
    epoch_loss /= static_cast<double>(epoch_steps);
    info << "epoch " << epoch << " mean loss " << epoch_loss << "\n";
    if (cfg.training.checkpoint_every > 0 && (epoch + 1) % cfg.training.checkpoint_every == 0) {
      save_checkpoint(opts.out_dir / (prefix + ".epoch" + std::to_string(epoch) + ".catc"),
                      model.to_checkpoint(vocab));
    }
    if (epoch_loss < best_loss) {
      best_loss = epoch_loss;
      save_checkpoint(result.best_checkpoint, model.to_checkpoint(vocab));
    }
  }
  result.steps = step;
  result.final_epoch_loss = epoch_loss;
  save_checkpoint(result.final_checkpoint, model.to_checkpoint(vocab));
  return result;
}

void generate_caption_file(const std::filesystem::path& features_path,
                           const std::filesystem::path& caption_ckpt, const DecodeConfig& decode,
                           std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(caption_ckpt);
  Captioner model = Captioner::from_checkpoint(ckpt);
  for (const FeatureMapSet& f : read_feature_file(features_path)) {
    const std::vector<int> ids = model.generate(f, decode);
    out << f.image_id << '\t' << join_tokens(ckpt.vocab.decode(ids)) << '\n';
  }
}

void generate_catnet_file(const std::filesystem::path& features_path,
                          const std::filesystem::path& caption_ckpt,
                          const std::filesystem::path& humor_ckpt, const DecodeConfig& decode,
                          std::ostream& out) {
  const Checkpoint cc = load_checkpoint(caption_ckpt);
  Captioner captioner = Captioner::from_checkpoint(cc);
  const Checkpoint hc = load_checkpoint(humor_ckpt);
  Humorizer humorizer = Humorizer::from_checkpoint(hc);
  for (const FeatureMapSet& f : read_feature_file(features_path)) {
    const std::vector<int> ids = captioner.generate(f, decode);
    const std::string factual = join_tokens(cc.vocab.decode(ids));
    const std::string funny = humorizer.funnify(factual, hc.vocab, decode);
    out << f.image_id << '\t' << factual << '\t' << funny << '\n';
  }
}

Vocabulary build_vocab_from_files(const std::vector<std::filesystem::path>& caption_files,
                                  const std::vector<std::filesystem::path>& pair_files,
                                  const std::vector<std::filesystem::path>& text_files,
                                  std::size_t min_count) {
  std::vector<std::string> texts;
  for (const auto& path : caption_files) {
    for (const CaptionRow& row : read_caption_file(path)) texts.push_back(row.caption);
  }
  for (const auto& path : pair_files) {
    for (const PairRow& row : read_pair_file(path)) {
      texts.push_back(row.source);
      texts.push_back(row.target);
    }
  }
  for (const auto& path : text_files) {
    for (const std::string& line : read_lines(path)) {
      if (!line.empty()) texts.push_back(line);
    }
  }
  return Vocabulary::build_from_texts(texts, min_count);
}

}  // namespace catnet
