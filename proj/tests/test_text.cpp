#include <cmath>

#include "catnet/errors.hpp"
#include "catnet/text.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace catnet;
using catnet::testing::TempDir;
using catnet::testing::write_text;

TEST_CASE("tokenize") {
  SUBCASE("caption with trailing period") {
    const auto t = tokenize("Black dog is digging in snow.");
    CHECK(t == std::vector<std::string>{"black", "dog", "is", "digging", "in", "snow", "."});
  }
  SUBCASE("empty input") { CHECK(tokenize("").empty()); }
  SUBCASE("interior apostrophe survives, whitespace collapses") {
    CHECK(tokenize("Don't   stop") == std::vector<std::string>{"don't", "stop"});
  }
  SUBCASE("leading and trailing punctuation peel into separate tokens") {
    CHECK(tokenize("\"hello!?\"") == std::vector<std::string>{"\"", "hello", "!", "?", "\""});
    CHECK(tokenize("!!") == std::vector<std::string>{"!", "!"});
  }
}

TEST_CASE("vocabulary build") {
  SUBCASE("min_count threshold maps rare words to UNK") {
    const std::vector<std::string> corpus = {"a a a", "b"};
    const Vocabulary v = Vocabulary::build_from_texts(corpus, 2);
    CHECK(v.size() == 5);  // 4 reserved + "a"
    CHECK(v.lookup("a") == 4);
    CHECK(v.lookup("b") == Vocabulary::kUnk);
  }
  SUBCASE("min_count 1 keeps k distinct tokens") {
    const std::vector<std::string> corpus = {"w x y z"};
    CHECK(Vocabulary::build_from_texts(corpus, 1).size() == 4 + 4);
  }
  SUBCASE("count ties break lexicographically") {
    const std::vector<std::string> corpus = {"cat ant cat ant"};
    const Vocabulary v = Vocabulary::build_from_texts(corpus, 1);
    CHECK(v.lookup("ant") == 4);
    CHECK(v.lookup("cat") == 5);
  }
  SUBCASE("deterministic across rebuilds") {
    const std::vector<std::string> corpus = {"the dog runs", "the cat sleeps", "dogs and dogs"};
    const Vocabulary a = Vocabulary::build_from_texts(corpus, 1);
    const Vocabulary b = Vocabulary::build_from_texts(corpus, 1);
    CHECK(a == b);
  }
  SUBCASE("empty corpus rejected") {
    CHECK_THROWS_AS(Vocabulary::build({}, 1), DataError);
  }
}

TEST_CASE("encode and decode") {
  const std::vector<std::string> corpus = {"a dog runs fast", "a dog sleeps"};
  const Vocabulary v = Vocabulary::build_from_texts(corpus, 1);

  SUBCASE("roundtrip for in-vocab text") {
    const auto toks = tokenize("a dog sleeps fast");
    CHECK(v.decode(v.encode(toks, false)) == toks);
    CHECK(v.decode(v.encode(toks, true)) == toks);  // markers stripped
  }
  SUBCASE("out-of-vocab becomes UNK index 3") {
    const auto ids = v.encode(tokenize("a zebra"), false);
    CHECK(ids[1] == Vocabulary::kUnk);
  }
  SUBCASE("markers wrap with START=1 END=2") {
    const auto ids = v.encode(tokenize("dog"), true);
    REQUIRE(ids.size() == 3);
    CHECK(ids.front() == Vocabulary::kStart);
    CHECK(ids[1] == v.lookup("dog"));
    CHECK(ids.back() == Vocabulary::kEnd);
  }
  SUBCASE("reserved surface forms cannot come from raw text") {
    // lowercasing makes the uppercase reserved spellings unreachable
    const auto toks = tokenize("<PAD> <START>");
    for (const auto& t : toks) CHECK(v.lookup(t) != Vocabulary::kPad);
  }
}

TEST_CASE("vocabulary file roundtrip") {
  TempDir dir("vocab");
  const Vocabulary v = Vocabulary::build_from_texts(
      std::vector<std::string>{"the dog runs", "the cat naps"}, 1);
  v.save(dir.file("v.tsv"));
  const Vocabulary loaded = Vocabulary::load(dir.file("v.tsv"));
  CHECK(loaded == v);
  CHECK(loaded.count(4) == v.count(4));

  write_text(dir.file("bad.tsv"), "<PAD>\t0\n");
  CHECK_THROWS_AS(Vocabulary::load(dir.file("bad.tsv")), DataError);
}

TEST_CASE("embedding loader") {
  TempDir dir("emb");
  const Vocabulary v =
      Vocabulary::build_from_texts(std::vector<std::string>{"dog cat bird dog cat dog"}, 1);
  // counts: dog 3, cat 2, bird 1 -> indices 4, 5, 6

  SUBCASE("direct read") {
    write_text(dir.file("e.txt"), "dog 0.1 0.2\ncat -1 2\n");
    SplitMix64 rng(3);
    const EmbeddingTable t = load_embeddings(dir.file("e.txt"), v, 2, rng);
    CHECK(t.rows.at(4, 0) == doctest::Approx(0.1));
    CHECK(t.rows.at(4, 1) == doctest::Approx(0.2));
    CHECK(t.found == 2);
    CHECK(t.coverage == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("missing token gets a row near the mean found norm, PAD stays zero") {
    write_text(dir.file("e.txt"), "dog 3 4\ncat 0 5\n");  // norms 5 and 5
    SplitMix64 rng(3);
    const EmbeddingTable t = load_embeddings(dir.file("e.txt"), v, 2, rng);
    const double norm = std::hypot(t.rows.at(6, 0), t.rows.at(6, 1));
    CHECK(norm >= 2.5);  // within +-50% of the mean found norm 5
    CHECK(norm <= 7.5);
    CHECK(t.rows.at(Vocabulary::kPad, 0) == 0.0);
    CHECK(t.rows.at(Vocabulary::kPad, 1) == 0.0);
  }
  SUBCASE("dimension mismatch rejected with line number") {
    write_text(dir.file("e.txt"), "dog 1 2\ncat 1 2 3\n");
    SplitMix64 rng(3);
    CHECK_THROWS_WITH_AS(load_embeddings(dir.file("e.txt"), v, 2, rng), doctest::Contains(":2"),
                         DataError);
  }
  SUBCASE("dim 50 file against expected 100 rejected") {
    std::string line = "dog";
    for (int i = 0; i < 50; ++i) line += " 0.5";
    write_text(dir.file("e.txt"), line + "\n");
    SplitMix64 rng(3);
    CHECK_THROWS_AS(load_embeddings(dir.file("e.txt"), v, 100, rng), DataError);
    CHECK(probe_embedding_dim(dir.file("e.txt")) == 50);
  }
  SUBCASE("zero coverage proceeds with random init") {
    write_text(dir.file("e.txt"), "zebra 1 2\n");
    SplitMix64 rng(3);
    const EmbeddingTable t = load_embeddings(dir.file("e.txt"), v, 2, rng);
    CHECK(t.found == 0);
    CHECK(t.coverage == 0.0);
    // non-PAD rows still initialized
    CHECK((t.rows.at(4, 0) != 0.0 || t.rows.at(4, 1) != 0.0));
  }
  SUBCASE("row count always |V|") {
    write_text(dir.file("e.txt"), "dog 1 2\n");
    SplitMix64 rng(3);
    CHECK(load_embeddings(dir.file("e.txt"), v, 2, rng).rows.rows() == v.size());
  }
}

TEST_CASE("corpus file readers") {
  TempDir dir("corpus");
  write_text(dir.file("caps.tsv"), "img1\ta dog runs\nimg2\ta cat naps\n");
  const auto rows = read_caption_file(dir.file("caps.tsv"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].image_id == "img1");
  CHECK(rows[1].caption == "a cat naps");

  write_text(dir.file("bad.tsv"), "no tab here\n");
  CHECK_THROWS_AS(read_caption_file(dir.file("bad.tsv")), DataError);

  write_text(dir.file("pairs.tsv"), "a dog\ta funny dog\n");
  const auto pairs = read_pair_file(dir.file("pairs.tsv"));
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].target == "a funny dog");
}
