#include "catnet/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "catnet/errors.hpp"

namespace catnet {
namespace {

bool is_split_punct(char c) {
  switch (c) {
    case '.':
    case ',':
    case '!':
    case '?':
    case ';':
    case ':':
    case '"':
    case '\'':
      return true;
    default:
      return false;
  }
}

void emit_chunk(std::string_view chunk, std::vector<std::string>& out) {
  // peel leading punctuation, one token per character
  std::size_t lo = 0;
  while (lo < chunk.size() && is_split_punct(chunk[lo])) {
    out.emplace_back(1, chunk[lo]);
    ++lo;
  }
  std::size_t hi = chunk.size();
  while (hi > lo && is_split_punct(chunk[hi - 1])) --hi;
  if (hi > lo) out.emplace_back(chunk.substr(lo, hi - lo));
  for (std::size_t i = hi; i < chunk.size(); ++i) out.emplace_back(1, chunk[i]);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char c : text) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < lowered.size()) {
    while (i < lowered.size() && std::isspace(static_cast<unsigned char>(lowered[i]))) ++i;
    std::size_t j = i;
    while (j < lowered.size() && !std::isspace(static_cast<unsigned char>(lowered[j]))) ++j;
    if (j > i) emit_chunk(std::string_view(lowered).substr(i, j - i), out);
    i = j;
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

const std::array<std::string, 4>& Vocabulary::reserved_tokens() {
  static const std::array<std::string, 4> kTokens = {"<PAD>", "<START>", "<END>", "<UNK>"};
  return kTokens;
}

Vocabulary::Vocabulary() {
  for (const std::string& t : reserved_tokens()) {
    token_to_index_.emplace(t, static_cast<int>(index_to_token_.size()));
    index_to_token_.push_back(t);
    counts_.push_back(0);
  }
}

Vocabulary Vocabulary::build(const std::map<std::string, std::size_t>& counts,
                             std::size_t min_count) {
  if (min_count < 1) throw DataError("build_vocab: min_count must be >= 1");
  if (counts.empty()) throw DataError("build_vocab: empty corpus");
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [token, count] : counts) {
    if (count >= min_count) kept.emplace_back(token, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (auto& [token, count] : kept) {
    v.token_to_index_.emplace(token, static_cast<int>(v.index_to_token_.size()));
    v.index_to_token_.push_back(token);
    v.counts_.push_back(count);
  }
  return v;
}

Vocabulary Vocabulary::build_from_texts(std::span<const std::string> texts,
                                        std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const std::string& text : texts) {
    for (std::string& tok : tokenize(text)) ++counts[std::move(tok)];
  }
  return build(counts, min_count);
}

int Vocabulary::lookup(std::string_view token) const {
  auto it = token_to_index_.find(std::string(token));
  return it == token_to_index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= index_to_token_.size()) {
    throw DataError("Vocabulary: index " + std::to_string(index) + " out of range");
  }
  return index_to_token_[static_cast<std::size_t>(index)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens, bool add_markers) const {
  std::vector<int> out;
  out.reserve(tokens.size() + 2);
  if (add_markers) out.push_back(kStart);
  for (const std::string& t : tokens) out.push_back(lookup(t));
  if (add_markers) out.push_back(kEnd);
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (is_reserved(id)) continue;
    out.push_back(token(id));
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write vocabulary file " + path.string());
  for (std::size_t i = 0; i < index_to_token_.size(); ++i) {
    f << index_to_token_[i] << '\t' << counts_[i] << '\n';
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  for (std::string& line : read_lines(path)) {
    if (!line.empty()) lines.push_back(std::move(line));
  }
  if (lines.size() < kReservedCount) {
    throw DataError(path.string() + ": vocabulary file missing reserved rows");
  }
  Vocabulary v;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t tab = lines[i].find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(i + 1) + ": expected token<TAB>count");
    }
    const std::string token = lines[i].substr(0, tab);
    const std::size_t count = static_cast<std::size_t>(std::stoull(lines[i].substr(tab + 1)));
    if (i < kReservedCount) {
      if (token != reserved_tokens()[i]) {
        throw DataError(path.string() + ": reserved token row " + std::to_string(i) +
                        " must be " + reserved_tokens()[i]);
      }
      continue;
    }
    v.token_to_index_.emplace(token, static_cast<int>(v.index_to_token_.size()));
    v.index_to_token_.push_back(token);
    v.counts_.push_back(count);
  }
  return v;
}

Vocabulary Vocabulary::from_rows(std::span<const std::pair<std::string, std::size_t>> rows,
                                 const std::string& origin) {
  if (rows.size() < kReservedCount) {
    throw DataError(origin + ": vocabulary missing reserved rows");
  }
  Vocabulary v;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i < kReservedCount) {
      if (rows[i].first != reserved_tokens()[i]) {
        throw DataError(origin + ": reserved token row " + std::to_string(i) + " must be " +
                        reserved_tokens()[i]);
      }
      continue;
    }
    v.token_to_index_.emplace(rows[i].first, static_cast<int>(v.index_to_token_.size()));
    v.index_to_token_.push_back(rows[i].first);
    v.counts_.push_back(rows[i].second);
  }
  return v;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                               std::size_t expected_dim, SplitMix64& rng) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read embedding file " + path.string());

  EmbeddingTable table;
  table.dim = expected_dim;
  table.rows = Tensor::zeros({vocab.size(), expected_dim});

  std::vector<bool> filled(vocab.size(), false);
  std::string line;
  std::size_t lineno = 0;
  double norm_total = 0.0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::vector<double> values;
    values.reserve(expected_dim);
    double v;
    while (ss >> v) values.push_back(v);
    if (values.size() != expected_dim) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(expected_dim) + " floats, got " +
                      std::to_string(values.size()));
    }
    const int idx = vocab.lookup(token);
    if (idx == Vocabulary::kUnk && token != Vocabulary::reserved_tokens()[Vocabulary::kUnk]) {
      continue;  // token not in vocabulary
    }
    if (filled[static_cast<std::size_t>(idx)]) continue;  // first occurrence wins
    double norm = 0.0;
    for (std::size_t d = 0; d < expected_dim; ++d) {
      table.rows.at(static_cast<std::size_t>(idx), d) = values[d];
      norm += values[d] * values[d];
    }
    filled[static_cast<std::size_t>(idx)] = true;
    norm_total += std::sqrt(norm);
    ++table.found;
  }

  const std::size_t non_reserved = vocab.size() - Vocabulary::kReservedCount;
  table.coverage = non_reserved == 0 ? 0.0
                                     : static_cast<double>(table.found) /
                                           static_cast<double>(non_reserved);
  const double mean_norm = table.found > 0 ? norm_total / static_cast<double>(table.found) : 0.0;

  // Missing rows: random direction rescaled to the mean found norm; when
  // nothing was found, fall back to plain uniform init.
  const double fallback_r = std::sqrt(6.0 / static_cast<double>(vocab.size() + expected_dim));
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (filled[i] || i == Vocabulary::kPad) continue;
    double norm = 0.0;
    std::vector<double> draw(expected_dim);
    for (std::size_t d = 0; d < expected_dim; ++d) {
      draw[d] = rng.uniform(-1.0, 1.0);
      norm += draw[d] * draw[d];
    }
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < expected_dim; ++d) {
      table.rows.at(i, d) = table.found > 0 && norm > 0.0 ? draw[d] / norm * mean_norm
                                                          : draw[d] * fallback_r;
    }
  }
  // PAD row stays zero and is excluded from updates downstream.
  for (std::size_t d = 0; d < expected_dim; ++d) table.rows.at(Vocabulary::kPad, d) = 0.0;
  return table;
}

EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dim, SplitMix64& rng) {
  EmbeddingTable table;
  table.dim = dim;
  table.rows = Tensor::zeros({vocab.size(), dim});
  const double r = std::sqrt(6.0 / static_cast<double>(vocab.size() + dim));
  for (std::size_t i = Vocabulary::kPad + 1; i < vocab.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) table.rows.at(i, d) = rng.uniform(-r, r);
  }
  return table;
}

std::size_t probe_embedding_dim(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read embedding file " + path.string());
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::size_t dim = 0;
    double v;
    while (ss >> v) ++dim;
    if (dim == 0) throw DataError(path.string() + ": first line has no vector values");
    return dim;
  }
  throw DataError(path.string() + ": empty embedding file");
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<CaptionRow> read_caption_file(const std::filesystem::path& path) {
  std::vector<CaptionRow> rows;
  std::size_t lineno = 0;
  for (const std::string& line : read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected image_id<TAB>caption");
    }
    rows.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return rows;
}

std::vector<PairRow> read_pair_file(const std::filesystem::path& path) {
  std::vector<PairRow> rows;
  std::size_t lineno = 0;
  for (const std::string& line : read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected source<TAB>target");
    }
    rows.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return rows;
}

void write_pair_file(const std::filesystem::path& path, std::span<const PairRow> rows) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write pair file " + path.string());
  for (const PairRow& r : rows) f << r.source << '\t' << r.target << '\n';
}

}  // namespace catnet
