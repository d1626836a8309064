#include <cstdint>

#include "catnet/bytesio.hpp"
#include "catnet/checkpoint.hpp"
#include "catnet/config.hpp"
#include "catnet/errors.hpp"
#include "catnet/features.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace catnet;
using catnet::testing::TempDir;
using catnet::testing::random_tensor;
using catnet::testing::read_text;
using catnet::testing::write_text;

TEST_CASE("crc32 known vector") {
  const char* s = "123456789";
  CHECK(crc32(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s), 9)) ==
        0xCBF43926u);
}

TEST_CASE("feature file roundtrip") {
  TempDir dir("catf");
  SplitMix64 rng(1);
  std::vector<FeatureMapSet> maps;
  for (int i = 0; i < 3; ++i) {
    FeatureMapSet m;
    m.image_id = "img" + std::to_string(i);
    m.grid_h = 2;
    m.grid_w = 2;
    m.channels = 5;
    m.features = random_tensor({4, 5}, rng);
    // float32 payload: store values representable exactly in f32
    for (std::size_t k = 0; k < m.features.numel(); ++k) {
      m.features[k] = static_cast<double>(static_cast<float>(m.features[k]));
    }
    maps.push_back(std::move(m));
  }
  write_feature_file(dir.file("f.catf"), maps);
  const auto loaded = read_feature_file(dir.file("f.catf"));
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].image_id == maps[i].image_id);
    CHECK(loaded[i].positions() == 4);
    for (std::size_t k = 0; k < 20; ++k) CHECK(loaded[i].features[k] == maps[i].features[k]);
  }

  SUBCASE("empty file is valid and holds zero images") {
    write_feature_file(dir.file("empty.catf"), {});
    CHECK(read_feature_file(dir.file("empty.catf")).empty());
  }
  SUBCASE("truncation detected") {
    auto bytes = read_text(dir.file("f.catf"));
    write_text(dir.file("trunc.catf"), bytes.substr(0, bytes.size() - 7));
    CHECK_THROWS_AS(read_feature_file(dir.file("trunc.catf")), DataError);
  }
  SUBCASE("wrong magic rejected") {
    write_text(dir.file("junk.catf"), "JUNKJUNKJUNKJUNK");
    CHECK_THROWS_AS(read_feature_file(dir.file("junk.catf")), CheckpointError);
  }
}

namespace {

Checkpoint tiny_checkpoint() {
  Checkpoint c;
  c.kind = ModelKind::kHumorizer;
  c.hyper["d"] = 2.5;
  std::vector<std::pair<std::string, std::size_t>> rows = {
      {"<PAD>", 0}, {"<START>", 0}, {"<END>", 0}, {"<UNK>", 0}, {"dog", 7}};
  c.vocab = Vocabulary::from_rows(rows, "test");
  c.tensors.emplace_back("t", Tensor::matrix(1, 2, {1.0, -2.0}));
  return c;
}

}  // namespace

TEST_CASE("checkpoint roundtrip and corruption detection") {
  TempDir dir("catc");
  SplitMix64 rng(7);
  Checkpoint c = tiny_checkpoint();
  c.tensors.emplace_back("big", random_tensor({3, 4}, rng));

  save_checkpoint(dir.file("m.catc"), c);
  const Checkpoint loaded = load_checkpoint(dir.file("m.catc"));
  CHECK(loaded.kind == c.kind);
  CHECK(loaded.hyper.at("d") == 2.5);
  CHECK(loaded.vocab == c.vocab);
  REQUIRE(loaded.tensors.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(loaded.tensors[i].first == c.tensors[i].first);
    REQUIRE(loaded.tensors[i].second.shape() == c.tensors[i].second.shape());
    for (std::size_t k = 0; k < c.tensors[i].second.numel(); ++k) {
      CHECK(loaded.tensors[i].second[k] == c.tensors[i].second[k]);  // bit-identical
    }
  }

  SUBCASE("save-load-save is byte stable") {
    save_checkpoint(dir.file("m2.catc"), loaded);
    CHECK(read_text(dir.file("m.catc")) == read_text(dir.file("m2.catc")));
  }
  SUBCASE("every single-byte flip fails the checksum or the format guards") {
    std::vector<std::uint8_t> bytes = checkpoint_bytes(c);
    SplitMix64 pick(99);
    for (int trial = 0; trial < 24; ++trial) {
      std::vector<std::uint8_t> corrupt = bytes;
      const std::size_t pos = static_cast<std::size_t>(pick.below(corrupt.size()));
      corrupt[pos] ^= static_cast<std::uint8_t>(1 + pick.below(255));
      CHECK_THROWS_AS(parse_checkpoint(corrupt, "corrupt"), CheckpointError);
    }
  }
  SUBCASE("newer version refused") {
    std::vector<std::uint8_t> bytes = checkpoint_bytes(c);
    bytes[4] = 9;  // version byte
    // restore the checksum so only the version trips
    const std::uint32_t crc = crc32(std::span(bytes).subspan(0, bytes.size() - 4));
    for (int i = 0; i < 4; ++i) {
      bytes[bytes.size() - 4 + static_cast<std::size_t>(i)] =
          static_cast<std::uint8_t>(crc >> (8 * i));
    }
    CHECK_THROWS_WITH_AS(parse_checkpoint(bytes, "vtest"), doctest::Contains("version"),
                         CheckpointError);
  }
}

TEST_CASE("checkpoint bytes match a hand-built little-endian stream") {
  // The same tiny checkpoint spelled out byte by byte, independent of
  // ByteWriter; this is the on-disk contract including byte order.
  std::vector<std::uint8_t> want;
  auto u8 = [&](std::uint8_t v) { want.push_back(v); };
  auto u16 = [&](std::uint16_t v) {
    for (int i = 0; i < 2; ++i) want.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) want.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) want.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto str = [&](std::string_view s) {
    for (char ch : s) want.push_back(static_cast<std::uint8_t>(ch));
  };

  str("CATC");
  u32(1);  // version
  u32(2);  // humorizer
  u32(1);  // one hyperparameter
  u16(1);
  str("d");
  u64(0x4004000000000000ull);  // 2.5
  u32(5);                      // vocab rows
  for (const char* tok : {"<PAD>", "<START>", "<END>", "<UNK>"}) {
    u16(static_cast<std::uint16_t>(std::string(tok).size()));
    str(tok);
    u64(0);
  }
  u16(3);
  str("dog");
  u64(7);
  u32(1);  // one tensor
  u16(1);
  str("t");
  u8(2);  // rank
  u64(1);
  u64(2);
  u64(0x3FF0000000000000ull);  // 1.0
  u64(0xC000000000000000ull);  // -2.0
  const std::uint32_t crc = crc32(want);
  u32(crc);

  CHECK(checkpoint_bytes(tiny_checkpoint()) == want);
  const Checkpoint parsed = parse_checkpoint(want, "golden");
  CHECK(parsed.tensors[0].second[0] == 1.0);
  CHECK(parsed.tensors[0].second[1] == -2.0);
  CHECK(parsed.hyper.at("d") == 2.5);
}

TEST_CASE("run config parsing") {
  const std::string text = R"(# demo config
[model]
kind = humorizer
layers = 3
heads = 2
d_model = 64
d_ff = 128
dropout = 0.2

[training]
seed = 42
lr = 0.001
batch_size = 8
epochs = 5

[data]
pairs = /tmp/nonexistent-pairs.tsv

[decode]
beam_width = 4
length_norm = 0.6
)";
  const RunConfig cfg = parse_config_text(text, "inline");
  CHECK(cfg.model.kind == "humorizer");
  CHECK(cfg.model.layers == 3);
  CHECK(cfg.model.d_model == 64);
  CHECK(cfg.training.seed == 42);
  CHECK(cfg.training.lr == doctest::Approx(0.001));
  CHECK(cfg.decode.beam_width == 4);

  SUBCASE("unknown key rejected") {
    CHECK_THROWS_WITH_AS(parse_config_text("[model]\nbogus = 1\n", "x"),
                         doctest::Contains("bogus"), DataError);
  }
  SUBCASE("unknown section rejected") {
    CHECK_THROWS_AS(parse_config_text("[mystery]\nk = 1\n", "x"), DataError);
  }
  SUBCASE("dropout range enforced") {
    CHECK_THROWS_AS(parse_config_text("[model]\ndropout = 1.0\n", "x"), DataError);
  }
  SUBCASE("beam width floor enforced") {
    CHECK_THROWS_AS(parse_config_text("[decode]\nbeam_width = 0\n", "x"), DataError);
  }
  SUBCASE("d_model/head divisibility enforced for the humorizer") {
    CHECK_THROWS_AS(
        parse_config_text("[model]\nkind = humorizer\nd_model = 10\nheads = 4\n", "x"),
        DataError);
  }
}
