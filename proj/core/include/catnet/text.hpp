#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "catnet/rng.hpp"
#include "catnet/tensor.hpp"

namespace catnet {

/// Lowercases, splits on whitespace, and peels leading/trailing punctuation
/// (.,!?;:"') into separate tokens. Interior punctuation (don't) stays put.
std::vector<std::string> tokenize(std::string_view text);

std::string join_tokens(std::span<const std::string> tokens);

/// Token <-> index map with reserved indices 0..3. The reserved surface forms
/// are uppercase on purpose: tokenize() lowercases everything, so raw text can
/// never produce them.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kStart = 1;
  static constexpr int kEnd = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReservedCount = 4;

  static const std::array<std::string, 4>& reserved_tokens();

  Vocabulary();

  /// Tokens with count >= min_count get indices from 4 up, ordered by
  /// descending count then ascending token. min_count must be >= 1.
  static Vocabulary build(const std::map<std::string, std::size_t>& counts,
                          std::size_t min_count);
  static Vocabulary build_from_texts(std::span<const std::string> texts, std::size_t min_count);

  std::size_t size() const { return index_to_token_.size(); }
  int lookup(std::string_view token) const;  // kUnk when absent
  const std::string& token(int index) const;
  std::size_t count(int index) const { return counts_[static_cast<std::size_t>(index)]; }
  bool is_reserved(int index) const { return index >= 0 && index < kReservedCount; }

  std::vector<int> encode(std::span<const std::string> tokens, bool add_markers) const;
  /// Drops all reserved indices, returns surface tokens.
  std::vector<std::string> decode(std::span<const int> ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  /// Reconstructs from (token, count) rows in index order, validating the
  /// reserved prefix. `origin` names the source in error messages.
  static Vocabulary from_rows(std::span<const std::pair<std::string, std::size_t>> rows,
                              const std::string& origin);

  bool operator==(const Vocabulary& o) const {
    return index_to_token_ == o.index_to_token_;
  }

 private:
  std::unordered_map<std::string, int> token_to_index_;
  std::vector<std::string> index_to_token_;
  std::vector<std::size_t> counts_;
};

struct EmbeddingTable {
  Tensor rows;        // [|V|, dim]
  std::size_t dim = 0;
  double coverage = 0.0;  // found fraction of non-reserved vocab
  std::size_t found = 0;
};

/// Reads a whitespace-delimited text embedding file ("token v1 ... vD" per
/// line). Vocabulary tokens absent from the file get a seeded-random row
/// rescaled to the mean norm of the found rows; PAD stays all-zero. A line
/// whose float count disagrees with expected_dim raises DataError naming the
/// line number.
EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                               std::size_t expected_dim, SplitMix64& rng);

/// Random embedding table (no pretrained file): uniform(-r, r) with
/// r = sqrt(6 / (|V| + dim)), PAD row zeroed.
EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dim, SplitMix64& rng);

/// Width of the vectors in an embedding file (from its first data line).
std::size_t probe_embedding_dim(const std::filesystem::path& path);

// Corpus file readers (TSV formats, see docs/formats.md).
struct CaptionRow {
  std::string image_id;
  std::string caption;
};
std::vector<CaptionRow> read_caption_file(const std::filesystem::path& path);

struct PairRow {
  std::string source;
  std::string target;
};
std::vector<PairRow> read_pair_file(const std::filesystem::path& path);
void write_pair_file(const std::filesystem::path& path, std::span<const PairRow> rows);

std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace catnet
