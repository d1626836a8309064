#include "catnet/train.hpp"

#include <sstream>

#include "catnet/errors.hpp"
#include "catnet/features.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace catnet;
using catnet::testing::TempDir;
using catnet::testing::random_tensor;
using catnet::testing::read_text;
using catnet::testing::write_text;

namespace {

struct DeskData {
  TempDir dir{"pipeline"};
  std::filesystem::path features = dir.file("f.catf");
  std::filesystem::path captions = dir.file("captions.tsv");
  std::filesystem::path pairs = dir.file("pairs.tsv");
  std::filesystem::path vocab = dir.file("vocab.tsv");

  DeskData() {
    SplitMix64 rng(404);
    std::vector<FeatureMapSet> maps;
    for (int i = 0; i < 4; ++i) {
      FeatureMapSet m;
      m.image_id = "img" + std::to_string(i);
      m.grid_h = m.grid_w = 2;
      m.channels = 4;
      m.features = random_tensor({4, 4}, rng);
      maps.push_back(std::move(m));
    }
    write_feature_file(features, maps);
    write_text(captions,
               "img0\ta dog runs on grass\n"
               "img1\ta cat naps on a mat\n"
               "img2\ttwo boys kick a ball\n"
               "img3\ta bird sits on a fence\n"
               "missing\tno features for this one\n");
    write_text(pairs,
               "a dog runs\ta dog runs hoping to find bones\n"
               "a cat naps\ta cat naps dreaming of fish\n"
               "two boys kick a ball\ttwo boys kick a ball to the moon\n"
               "a bird sits\ta bird sits plotting world peace\n");
    const Vocabulary v = build_vocab_from_files({captions}, {pairs}, {}, 1);
    v.save(vocab);
  }

  std::string caption_config(std::uint64_t seed, std::size_t epochs) const {
    std::ostringstream ss;
    ss << "[model]\nkind = captioner\nattention = local\nhidden_dim = 8\nembed_dim = 6\n"
          "channels = 4\nwindow = 9\ndropout = 0\n"
       << "[training]\nseed = " << seed << "\nlr = 0.005\nbatch_size = 4\nepochs = " << epochs
       << "\ncheckpoint_every = 0\n"
       << "[data]\nfeatures = " << features.string() << "\ncaptions = " << captions.string()
       << "\nvocab = " << vocab.string() << "\n";
    return ss.str();
  }

  std::string humor_config(std::uint64_t seed, std::size_t epochs,
                           std::size_t layers = 1) const {
    std::ostringstream ss;
    ss << "[model]\nkind = humorizer\nlayers = " << layers
       << "\nheads = 2\nd_model = 16\nd_ff = 32\ndropout = 0\nmax_pair_len = 16\n"
       << "[training]\nseed = " << seed << "\nlr = 0.005\nbatch_size = 4\nepochs = " << epochs
       << "\ncheckpoint_every = 0\n"
       << "[data]\npairs = " << pairs.string() << "\nvocab = " << vocab.string() << "\n";
    return ss.str();
  }
};

}  // namespace

TEST_CASE("caption trainer") {
  DeskData data;

  SUBCASE("epochs=0 writes the initialization") {
    const RunConfig cfg = parse_config_text(data.caption_config(7, 0), "t");
    TrainOptions opts;
    opts.out_dir = data.dir.file("run0");
    std::ostringstream log, info;
    const TrainResult r = train_caption(cfg, opts, log, info);
    CHECK(r.skipped == 1);  // the caption without features

    // expected initialization: same seed, same draw order as the trainer
    const Vocabulary v = Vocabulary::load(data.vocab);
    SplitMix64 rng(7);
    CaptionerConfig mc;
    mc.variant = AttentionVariant::kLocal;
    mc.vocab_size = v.size();
    mc.embed_dim = 6;
    mc.hidden_dim = 8;
    mc.channels = 4;
    mc.window = 9;
    mc.max_len = 30;
    mc.dropout = 0.0;
    Captioner expect = Captioner::init(mc, rng);
    const auto expect_bytes = checkpoint_bytes(expect.to_checkpoint(v));
    const auto got = read_text(r.final_checkpoint);
    CHECK(std::string(expect_bytes.begin(), expect_bytes.end()) == got);
    CHECK(read_text(r.best_checkpoint) == got);
  }
  SUBCASE("same seed, byte-identical checkpoints; different seed differs") {
    std::ostringstream sink;
    const RunConfig cfg = parse_config_text(data.caption_config(11, 2), "t");
    TrainOptions a, b;
    a.out_dir = data.dir.file("runA");
    b.out_dir = data.dir.file("runB");
    const TrainResult ra = train_caption(cfg, a, sink, sink);
    const TrainResult rb = train_caption(cfg, b, sink, sink);
    CHECK(read_text(ra.final_checkpoint) == read_text(rb.final_checkpoint));

    const RunConfig other = parse_config_text(data.caption_config(12, 2), "t");
    TrainOptions c;
    c.out_dir = data.dir.file("runC");
    const TrainResult rc = train_caption(other, c, sink, sink);
    CHECK(read_text(ra.final_checkpoint) != read_text(rc.final_checkpoint));
  }
  SUBCASE("loss goes down over a few epochs") {
    std::ostringstream log, info;
    const RunConfig cfg = parse_config_text(data.caption_config(3, 12), "t");
    TrainOptions opts;
    opts.out_dir = data.dir.file("runL");
    const TrainResult r = train_caption(cfg, opts, log, info);
    // first logged loss vs final epoch mean
    std::istringstream lines(log.str());
    std::string first_line;
    std::getline(lines, first_line);
    const double first_loss = std::stod(first_line.substr(first_line.find("caption\t") + 8));
    CHECK(r.final_epoch_loss < first_loss);
    CHECK(r.steps == 12);  // 4 usable captions, batch 4, 12 epochs
  }
}

TEST_CASE("humor trainer") {
  DeskData data;
  std::ostringstream sink;

  SUBCASE("pretrain then finetune, architecture guarded") {
    const RunConfig pre = parse_config_text(data.humor_config(5, 1), "t");
    TrainOptions pre_opts;
    pre_opts.out_dir = data.dir.file("pre");
    const TrainResult rp = train_humor(pre, HumorPhase::kPretrain, pre_opts, sink, sink);

    TrainOptions fin_opts;
    fin_opts.out_dir = data.dir.file("fin");
    fin_opts.init_checkpoint = rp.final_checkpoint;
    const TrainResult rf =
        train_humor(pre, HumorPhase::kFinetune, fin_opts, sink, sink);
    CHECK(std::filesystem::exists(rf.final_checkpoint));

    // layers mismatch between checkpoint and config refused
    const RunConfig wrong = parse_config_text(data.humor_config(5, 1, 2), "t");
    TrainOptions bad_opts;
    bad_opts.out_dir = data.dir.file("bad");
    bad_opts.init_checkpoint = rp.final_checkpoint;
    CHECK_THROWS_AS(train_humor(wrong, HumorPhase::kFinetune, bad_opts, sink, sink),
                    CheckpointError);
  }
  SUBCASE("finetune needs an init checkpoint unless overridden") {
    const RunConfig cfg = parse_config_text(data.humor_config(5, 1), "t");
    TrainOptions opts;
    opts.out_dir = data.dir.file("noinit");
    CHECK_THROWS_AS(train_humor(cfg, HumorPhase::kFinetune, opts, sink, sink), CheckpointError);

    std::ostringstream info;
    opts.allow_fresh_finetune = true;
    const TrainResult r = train_humor(cfg, HumorPhase::kFinetune, opts, sink, info);
    CHECK(std::filesystem::exists(r.final_checkpoint));
    CHECK(info.str().find("fresh") != std::string::npos);
  }
  SUBCASE("vocabulary mismatch between checkpoint and config is a hard error") {
    const RunConfig pre = parse_config_text(data.humor_config(5, 1), "t");
    TrainOptions pre_opts;
    pre_opts.out_dir = data.dir.file("pre2");
    const TrainResult rp = train_humor(pre, HumorPhase::kPretrain, pre_opts, sink, sink);

    // different vocabulary file
    const Vocabulary other = Vocabulary::build_from_texts(
        std::vector<std::string>{"entirely different words here"}, 1);
    other.save(data.dir.file("other-vocab.tsv"));
    std::string cfg_text = data.humor_config(5, 1);
    const std::string needle = "vocab = " + data.vocab.string();
    cfg_text.replace(cfg_text.find(needle), needle.size(),
                     "vocab = " + data.dir.file("other-vocab.tsv").string());
    const RunConfig mismatched = parse_config_text(cfg_text, "t");
    TrainOptions opts;
    opts.out_dir = data.dir.file("mismatch");
    opts.init_checkpoint = rp.final_checkpoint;
    CHECK_THROWS_AS(train_humor(mismatched, HumorPhase::kFinetune, opts, sink, sink), DataError);
  }
  SUBCASE("train log lines carry increasing steps and the phase") {
    std::ostringstream log;
    const RunConfig cfg = parse_config_text(data.humor_config(5, 2), "t");
    TrainOptions opts;
    opts.out_dir = data.dir.file("log");
    train_humor(cfg, HumorPhase::kPretrain, opts, log, sink);
    std::istringstream lines(log.str());
    std::string line;
    std::size_t last_step = 0;
    while (std::getline(lines, line)) {
      std::istringstream fields(line);
      std::size_t step;
      std::size_t epoch;
      std::string phase;
      double loss;
      fields >> step >> epoch >> phase >> loss;
      CHECK(step == last_step + 1);
      CHECK(phase == "pretrain");
      CHECK(loss > 0.0);
      last_step = step;
    }
    CHECK(last_step == 2);
  }
}

TEST_CASE("generation surfaces") {
  DeskData data;
  std::ostringstream sink;

  const RunConfig ccfg = parse_config_text(data.caption_config(21, 3), "t");
  TrainOptions copts;
  copts.out_dir = data.dir.file("cap");
  const TrainResult rc = train_caption(ccfg, copts, sink, sink);

  const RunConfig hcfg = parse_config_text(data.humor_config(22, 3), "t");
  TrainOptions hopts;
  hopts.out_dir = data.dir.file("hum");
  const TrainResult rh = train_humor(hcfg, HumorPhase::kPretrain, hopts, sink, sink);

  DecodeConfig decode;
  decode.beam_width = 2;
  decode.max_len = 8;

  SUBCASE("caption file is one row per image, factual column matches the pipeline") {
    std::ostringstream caps, both;
    generate_caption_file(data.features, rc.final_checkpoint, decode, caps);
    generate_catnet_file(data.features, rc.final_checkpoint, rh.final_checkpoint, decode, both);

    std::istringstream a(caps.str()), b(both.str());
    std::string la, lb;
    std::size_t rows = 0;
    while (std::getline(a, la) && std::getline(b, lb)) {
      ++rows;
      const std::size_t tab1 = lb.find('\t');
      const std::size_t tab2 = lb.find('\t', tab1 + 1);
      REQUIRE(tab2 != std::string::npos);
      CHECK(la == lb.substr(0, tab2));  // id + factual column identical
      for (const std::string& reserved : Vocabulary::reserved_tokens()) {
        CHECK(lb.find(reserved) == std::string::npos);
      }
    }
    CHECK(rows == 4);
  }
  SUBCASE("empty features file produces empty output") {
    write_feature_file(data.dir.file("empty.catf"), {});
    std::ostringstream out;
    generate_catnet_file(data.dir.file("empty.catf"), rc.final_checkpoint, rh.final_checkpoint,
                         decode, out);
    CHECK(out.str().empty());
  }
  SUBCASE("checksum failure aborts generation") {
    std::string bytes = read_text(rc.final_checkpoint);
    bytes[bytes.size() / 2] ^= 0x40;
    write_text(data.dir.file("corrupt.catc"), bytes);
    std::ostringstream out;
    CHECK_THROWS_AS(
        generate_caption_file(data.features, data.dir.file("corrupt.catc"), decode, out),
        CheckpointError);
  }
}

TEST_CASE("build_vocab_from_files merges corpora") {
  DeskData data;
  const Vocabulary v = build_vocab_from_files({data.captions}, {data.pairs}, {}, 1);
  CHECK(v.lookup("dog") != Vocabulary::kUnk);
  CHECK(v.lookup("bones") != Vocabulary::kUnk);   // appears only in pair targets
  CHECK(v.lookup("missing") == Vocabulary::kUnk); // ids are not tokenized
}
