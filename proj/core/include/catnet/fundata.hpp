#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "catnet/text.hpp"

namespace catnet {

enum class PosTag : std::uint8_t {
  kNoun,
  kVerb,
  kAdj,
  kAdv,
  kPron,
  kDet,
  kAdp,
  kConj,
  kNum,
  kPart,
  kOther,
};

const char* pos_tag_name(PosTag t);
std::optional<PosTag> pos_tag_from_name(std::string_view name);

/// Word -> candidate tag set loaded from a TSV lexicon, plus deterministic
/// suffix rules for unknown words. Disambiguation of a known ambiguous word
/// (docs/formats.md):
///   - after a NOUN or PRON token, priority VERB > NOUN > the fixed order;
///   - otherwise NOUN > VERB > the fixed order;
/// the fixed order being ADJ, ADV, PRON, DET, ADP, CONJ, NUM, PART, OTHER.
/// Unknown words: -ing/-ed -> VERB, -ly -> ADV, -s after a consonant -> NOUN,
/// all-digit -> NUM, no letters -> OTHER, anything else -> NOUN.
class PosLexicon {
 public:
  static PosLexicon load(const std::filesystem::path& path);

  void add(const std::string& token, std::vector<PosTag> tags);
  bool contains(const std::string& token) const { return entries_.count(token) > 0; }
  std::size_t size() const { return entries_.size(); }

  /// Candidate tags; falls back to the suffix rules for unknown tokens.
  std::vector<PosTag> candidates(const std::string& token) const;

 private:
  std::unordered_map<std::string, std::vector<PosTag>> entries_;
};

struct AnchorAnalysis {
  std::vector<std::string> tokens;
  std::vector<PosTag> tags;          // chosen tag per token
  std::vector<std::size_t> anchors;  // positions tagged NOUN or VERB, increasing
};

AnchorAnalysis tag(std::span<const std::string> tokens, const PosLexicon& lexicon);

/// Prefix through (and including) the third-from-last anchor token, or
/// nullopt (SKIP) when the sentence has fewer than four anchors.
std::optional<std::vector<std::string>> truncate_to_third_last_anchor(
    std::span<const std::string> tokens, const PosLexicon& lexicon);

enum class PairOrigin { kFunSynth, kSimilarCaption };

struct SentencePair {
  std::vector<std::string> source;
  std::vector<std::string> target;
  PairOrigin origin = PairOrigin::kFunSynth;
};

struct FunPairStats {
  std::size_t input = 0;
  std::size_t emitted = 0;
  std::size_t skipped = 0;
};

/// One factual->fun pair per fun sentence that truncates; sentences with too
/// few anchors, or either side over max_len tokens, count as skipped.
std::vector<SentencePair> make_fun_pairs(std::span<const std::string> fun_lines,
                                         const PosLexicon& lexicon, std::size_t max_len,
                                         FunPairStats* stats = nullptr);

double jaccard_similarity(std::span<const std::string> a, std::span<const std::string> b);

struct SimilarPairStats {
  std::size_t captions = 0;
  std::size_t emitted = 0;
  std::size_t dropped = 0;  // below threshold, no sibling, or over max_len
};

/// For every caption of an image with >= 2 captions, pairs it with its most
/// Jaccard-similar sibling (ties -> lexicographically smaller sibling text);
/// pairs under min_jaccard are dropped. Output order follows input order.
std::vector<SentencePair> make_similar_pairs(std::span<const CaptionRow> rows,
                                             double min_jaccard, std::size_t max_len,
                                             SimilarPairStats* stats = nullptr);

}  // namespace catnet
