// catnet: train and run the two-stage caption -> humor pipeline, plus the
// dataset-engineering and evaluation commands around it.

#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "catnet/config.hpp"
#include "catnet/errors.hpp"
#include "catnet/fundata.hpp"
#include "catnet/metrics.hpp"
#include "catnet/train.hpp"

namespace {

using namespace catnet;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheckpoint = 3;

void add_decode_flags(CLI::App* cmd, DecodeConfig& decode) {
  cmd->add_option("--beam-width", decode.beam_width, "Beam width (1 = greedy)")
      ->capture_default_str();
  cmd->add_option("--max-len", decode.max_len, "Maximum generated length")->capture_default_str();
  cmd->add_option("--length-norm", decode.length_norm,
                  "Length-normalization exponent for final beam ranking")
      ->capture_default_str();
}

// Writes either to a file or stdout.
struct OutStream {
  explicit OutStream(const std::string& path) {
    if (!path.empty() && path != "-") {
      file.open(path);
      if (!file) throw DataError("cannot write output file " + path);
    }
  }
  std::ostream& get() { return file.is_open() ? file : std::cout; }
  std::ofstream file;
};

int run_cli(int argc, char** argv) {
  CLI::App app{"CATNet: factual image captions and their humorous rewrites"};
  app.require_subcommand(1);
  std::function<void()> action;

  // ------------------------------------------------------------ build-vocab
  auto* sc_vocab = app.add_subcommand("build-vocab", "Build a vocabulary file from corpora");
  {
    auto captions = std::make_shared<std::vector<std::string>>();
    auto pairs = std::make_shared<std::vector<std::string>>();
    auto texts = std::make_shared<std::vector<std::string>>();
    auto min_count = std::make_shared<std::size_t>(2);
    auto out = std::make_shared<std::string>();
    sc_vocab->add_option("--captions", *captions, "Caption TSV files (id<TAB>caption)");
    sc_vocab->add_option("--pairs", *pairs, "Pair TSV files (source<TAB>target)");
    sc_vocab->add_option("--text", *texts, "Plain text files, one sentence per line");
    sc_vocab->add_option("--min-count", *min_count, "Minimum token count")->capture_default_str();
    sc_vocab->add_option("--out", *out, "Output vocabulary file")->required();
    sc_vocab->callback([=, &action] {
      action = [=] {
        if (captions->empty() && pairs->empty() && texts->empty()) {
          throw DataError("build-vocab: provide at least one of --captions/--pairs/--text");
        }
        std::vector<std::filesystem::path> c(captions->begin(), captions->end());
        std::vector<std::filesystem::path> p(pairs->begin(), pairs->end());
        std::vector<std::filesystem::path> t(texts->begin(), texts->end());
        const Vocabulary vocab = build_vocab_from_files(c, p, t, *min_count);
        vocab.save(*out);
        std::cout << "vocabulary: " << vocab.size() << " tokens (incl. 4 reserved) -> " << *out
                  << "\n";
      };
    });
  }

  // ----------------------------------------------------------- extract-noop
  auto* sc_extract = app.add_subcommand(
      "extract-noop", "Explain how feature files are produced (extraction is external)");
  sc_extract->callback([&action] {
    action = [] {
      std::cout
          << "Feature extraction is not part of this tool. Run any pretrained CNN\n"
             "(the reference setup uses VGG-16 conv feature maps) over your images\n"
             "and write the maps to the CATF binary format documented in\n"
             "docs/formats.md: magic \"CATF\", version 1, then per image an id,\n"
             "grid height/width, channel count and the float32 feature grid.\n"
             "The train-caption, caption and generate commands consume that file.\n";
    };
  });

  // ----------------------------------------------------------- make-fundata
  auto* sc_fundata = app.add_subcommand(
      "make-fundata", "Synthesize factual->fun training pairs from a fun-sentence corpus");
  {
    auto fun = std::make_shared<std::string>();
    auto lexicon = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto max_len = std::make_shared<std::size_t>(30);
    sc_fundata->add_option("--fun", *fun, "Fun sentences, one per line")->required();
    sc_fundata->add_option("--lexicon", *lexicon, "POS lexicon TSV")->required();
    sc_fundata->add_option("--out", *out, "Output pair TSV")->required();
    sc_fundata->add_option("--max-len", *max_len, "Maximum tokens per side")
        ->capture_default_str();
    sc_fundata->callback([=, &action] {
      action = [=] {
        const PosLexicon lex = PosLexicon::load(*lexicon);
        const std::vector<std::string> lines = read_lines(*fun);
        FunPairStats stats;
        const std::vector<SentencePair> pairs = make_fun_pairs(lines, lex, *max_len, &stats);
        std::vector<PairRow> rows;
        rows.reserve(pairs.size());
        for (const SentencePair& p : pairs) {
          rows.push_back({join_tokens(p.source), join_tokens(p.target)});
        }
        write_pair_file(*out, rows);
        std::cout << "fun pairs: input " << stats.input << ", emitted " << stats.emitted
                  << ", skipped " << stats.skipped << " -> " << *out << "\n";
      };
    });
  }

  // ------------------------------------------------------------- make-pairs
  auto* sc_pairs = app.add_subcommand(
      "make-pairs", "Pair similar captions of the same image for syntax pretraining");
  {
    auto captions = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto min_jaccard = std::make_shared<double>(0.2);
    auto max_len = std::make_shared<std::size_t>(30);
    sc_pairs->add_option("--captions", *captions, "Caption TSV (id<TAB>caption)")->required();
    sc_pairs->add_option("--out", *out, "Output pair TSV")->required();
    sc_pairs->add_option("--min-jaccard", *min_jaccard, "Similarity floor")
        ->capture_default_str();
    sc_pairs->add_option("--max-len", *max_len, "Maximum tokens per side")->capture_default_str();
    sc_pairs->callback([=, &action] {
      action = [=] {
        const std::vector<CaptionRow> rows = read_caption_file(*captions);
        SimilarPairStats stats;
        const std::vector<SentencePair> pairs =
            make_similar_pairs(rows, *min_jaccard, *max_len, &stats);
        std::vector<PairRow> out_rows;
        out_rows.reserve(pairs.size());
        for (const SentencePair& p : pairs) {
          out_rows.push_back({join_tokens(p.source), join_tokens(p.target)});
        }
        write_pair_file(*out, out_rows);
        std::cout << "similar pairs: captions " << stats.captions << ", emitted " << stats.emitted
                  << ", dropped " << stats.dropped << " -> " << *out << "\n";
      };
    });
  }

  // ---------------------------------------------------------- train-caption
  auto* sc_train_cap = app.add_subcommand("train-caption", "Train the attention-LSTM captioner");
  {
    auto config = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    auto log_path = std::make_shared<std::string>();
    sc_train_cap->add_option("--config", *config, "Run config file")->required();
    sc_train_cap->add_option("--out", *out_dir, "Output directory for checkpoints")->required();
    sc_train_cap->add_option("--log", *log_path, "Train log path (default <out>/train.log)");
    sc_train_cap->callback([=, &action] {
      action = [=] {
        const RunConfig cfg = parse_config(*config);
        TrainOptions opts;
        opts.out_dir = *out_dir;
        std::filesystem::create_directories(opts.out_dir);
        const std::filesystem::path log_file =
            log_path->empty() ? opts.out_dir / "train.log" : std::filesystem::path(*log_path);
        std::ofstream log(log_file);
        if (!log) throw DataError("cannot write train log " + log_file.string());
        const TrainResult result = train_caption(cfg, opts, log, std::cout);
        std::cout << "final checkpoint: " << result.final_checkpoint.string() << "\n"
                  << "best checkpoint:  " << result.best_checkpoint.string() << "\n";
      };
    });
  }

  // ------------------------------------------------------------ train-humor
  auto* sc_train_humor = app.add_subcommand("train-humor", "Train the seq2seq humorizer");
  {
    auto config = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    auto phase_name_in = std::make_shared<std::string>();
    auto init = std::make_shared<std::string>();
    auto log_path = std::make_shared<std::string>();
    auto allow_fresh = std::make_shared<bool>(false);
    sc_train_humor->add_option("--config", *config, "Run config file")->required();
    sc_train_humor->add_option("--phase", *phase_name_in, "pretrain or finetune")
        ->required()
        ->check(CLI::IsMember({"pretrain", "finetune"}));
    sc_train_humor->add_option("--out", *out_dir, "Output directory for checkpoints")->required();
    sc_train_humor->add_option("--init", *init, "Checkpoint to finetune from");
    sc_train_humor->add_flag("--allow-fresh-finetune", *allow_fresh,
                             "Permit finetune without --init (logged)");
    sc_train_humor->add_option("--log", *log_path, "Train log path (default <out>/train.log)");
    sc_train_humor->callback([=, &action] {
      action = [=] {
        const RunConfig cfg = parse_config(*config);
        TrainOptions opts;
        opts.out_dir = *out_dir;
        opts.allow_fresh_finetune = *allow_fresh;
        if (!init->empty()) opts.init_checkpoint = *init;
        std::filesystem::create_directories(opts.out_dir);
        const std::filesystem::path log_file =
            log_path->empty() ? opts.out_dir / "train.log" : std::filesystem::path(*log_path);
        std::ofstream log(log_file);
        if (!log) throw DataError("cannot write train log " + log_file.string());
        const HumorPhase phase =
            *phase_name_in == "pretrain" ? HumorPhase::kPretrain : HumorPhase::kFinetune;
        const TrainResult result = train_humor(cfg, phase, opts, log, std::cout);
        std::cout << "final checkpoint: " << result.final_checkpoint.string() << "\n"
                  << "best checkpoint:  " << result.best_checkpoint.string() << "\n";
      };
    });
  }

  // ---------------------------------------------------------------- caption
  auto* sc_caption = app.add_subcommand("caption", "Generate factual captions for a feature file");
  {
    auto features = std::make_shared<std::string>();
    auto ckpt = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto decode = std::make_shared<DecodeConfig>();
    sc_caption->add_option("--features", *features, "CATF feature file")->required();
    sc_caption->add_option("--checkpoint", *ckpt, "Captioner checkpoint")->required();
    sc_caption->add_option("--out", *out, "Output TSV (default stdout)");
    add_decode_flags(sc_caption, *decode);
    sc_caption->callback([=, &action] {
      action = [=] {
        OutStream os(*out);
        generate_caption_file(*features, *ckpt, *decode, os.get());
      };
    });
  }

  // ---------------------------------------------------------------- funnify
  auto* sc_funnify =
      app.add_subcommand("funnify", "Rewrite factual sentences as humorous ones (seq2seq only)");
  {
    auto ckpt = std::make_shared<std::string>();
    auto sentence = std::make_shared<std::string>();
    auto decode = std::make_shared<DecodeConfig>();
    sc_funnify->add_option("--checkpoint", *ckpt, "Humorizer checkpoint")->required();
    sc_funnify->add_option("sentence", *sentence,
                           "Input sentence (omit to read stdin, one per line)");
    add_decode_flags(sc_funnify, *decode);
    sc_funnify->callback([=, &action, &app] {
      const bool have_sentence = app.get_subcommand("funnify")->count("sentence") > 0;
      action = [=] {
        const Checkpoint c = load_checkpoint(*ckpt);
        Humorizer model = Humorizer::from_checkpoint(c);
        if (have_sentence) {
          std::cout << model.funnify(*sentence, c.vocab, *decode) << "\n";
        } else {
          std::string line;
          while (std::getline(std::cin, line)) {
            std::cout << model.funnify(line, c.vocab, *decode) << "\n";
          }
        }
      };
    });
  }

  // --------------------------------------------------------------- generate
  auto* sc_generate =
      app.add_subcommand("generate", "Full pipeline: factual caption, then its humorous rewrite");
  {
    auto features = std::make_shared<std::string>();
    auto cap_ckpt = std::make_shared<std::string>();
    auto humor_ckpt = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto decode = std::make_shared<DecodeConfig>();
    sc_generate->add_option("--features", *features, "CATF feature file")->required();
    sc_generate->add_option("--caption-checkpoint", *cap_ckpt, "Captioner checkpoint")
        ->required();
    sc_generate->add_option("--humor-checkpoint", *humor_ckpt, "Humorizer checkpoint")
        ->required();
    sc_generate->add_option("--out", *out, "Output TSV (default stdout)");
    add_decode_flags(sc_generate, *decode);
    sc_generate->callback([=, &action] {
      action = [=] {
        OutStream os(*out);
        generate_catnet_file(*features, *cap_ckpt, *humor_ckpt, *decode, os.get());
      };
    });
  }

  // --------------------------------------------------------------- evaluate
  auto* sc_eval = app.add_subcommand("evaluate", "Score outputs against references");
  {
    auto outputs = std::make_shared<std::string>();
    auto refs = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    sc_eval->add_option("--outputs", *outputs, "Model outputs TSV (one row per id)")->required();
    sc_eval->add_option("--refs", *refs, "Reference caption TSV (multiple rows per id)")
        ->required();
    sc_eval->add_option("--out", *out, "Report path (default stdout)");
    sc_eval->callback([=, &action] {
      action = [=] {
        const CorpusReport report = evaluate_corpus(*outputs, *refs);
        for (const std::string& id : report.missing_ids) {
          std::cerr << "warning: output id '" << id << "' has no references; excluded\n";
        }
        OutStream os(*out);
        os.get() << render_report(report);
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    action();
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run_cli(argc, argv); }
