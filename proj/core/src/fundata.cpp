#include "catnet/fundata.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <set>

#include "catnet/errors.hpp"

namespace catnet {
namespace {

constexpr std::array<const char*, 11> kTagNames = {
    "NOUN", "VERB", "ADJ", "ADV", "PRON", "DET", "ADP", "CONJ", "NUM", "PART", "OTHER"};

// Fixed priority after the NOUN/VERB pair is resolved.
constexpr std::array<PosTag, 11> kDefaultOrder = {
    PosTag::kNoun, PosTag::kVerb, PosTag::kAdj,  PosTag::kAdv,  PosTag::kPron, PosTag::kDet,
    PosTag::kAdp,  PosTag::kConj, PosTag::kNum,  PosTag::kPart, PosTag::kOther};
constexpr std::array<PosTag, 11> kAfterNominalOrder = {
    PosTag::kVerb, PosTag::kNoun, PosTag::kAdj,  PosTag::kAdv,  PosTag::kPron, PosTag::kDet,
    PosTag::kAdp,  PosTag::kConj, PosTag::kNum,  PosTag::kPart, PosTag::kOther};

bool has_letter(const std::string& token) {
  for (char c : token)
    if (std::isalpha(static_cast<unsigned char>(c))) return true;
  return false;
}

bool all_digits(const std::string& token) {
  if (token.empty()) return false;
  for (char c : token)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

bool is_vowel_char(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

PosTag suffix_rule(const std::string& token) {
  if (!has_letter(token)) return all_digits(token) ? PosTag::kNum : PosTag::kOther;
  const std::size_t n = token.size();
  if (n > 4 && token.ends_with("ing")) return PosTag::kVerb;
  if (n > 3 && token.ends_with("ed")) return PosTag::kVerb;
  if (n > 3 && token.ends_with("ly")) return PosTag::kAdv;
  if (n > 2 && token.back() == 's' && !is_vowel_char(token[n - 2]) && token[n - 2] != 's') {
    return PosTag::kNoun;
  }
  return PosTag::kNoun;
}

}  // namespace

const char* pos_tag_name(PosTag t) { return kTagNames[static_cast<std::size_t>(t)]; }

std::optional<PosTag> pos_tag_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kTagNames.size(); ++i) {
    if (name == kTagNames[i]) return static_cast<PosTag>(i);
  }
  return std::nullopt;
}

PosLexicon PosLexicon::load(const std::filesystem::path& path) {
  PosLexicon lex;
  std::size_t lineno = 0;
  for (const std::string& line : read_lines(path)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected token<TAB>TAG[,TAG...]");
    }
    const std::string token = line.substr(0, tab);
    std::vector<PosTag> tags;
    std::size_t pos = tab + 1;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      const std::string name = line.substr(pos, comma - pos);
      const auto tag = pos_tag_from_name(name);
      if (!tag) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": unknown tag '" + name +
                        "'");
      }
      if (std::find(tags.begin(), tags.end(), *tag) == tags.end()) tags.push_back(*tag);
      pos = comma + 1;
      if (comma == line.size()) break;
    }
    if (tags.empty()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": no tags for '" + token +
                      "'");
    }
    lex.add(token, std::move(tags));
  }
  return lex;
}

void PosLexicon::add(const std::string& token, std::vector<PosTag> tags) {
  entries_[token] = std::move(tags);
}

std::vector<PosTag> PosLexicon::candidates(const std::string& token) const {
  auto it = entries_.find(token);
  if (it != entries_.end()) return it->second;
  return {suffix_rule(token)};
}

AnchorAnalysis tag(std::span<const std::string> tokens, const PosLexicon& lexicon) {
  AnchorAnalysis out;
  out.tokens.assign(tokens.begin(), tokens.end());
  out.tags.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::vector<PosTag> cands = lexicon.candidates(tokens[i]);
    PosTag chosen = cands[0];
    if (cands.size() > 1) {
      const bool after_nominal =
          i > 0 && (out.tags.back() == PosTag::kNoun || out.tags.back() == PosTag::kPron);
      const auto& order = after_nominal ? kAfterNominalOrder : kDefaultOrder;
      for (PosTag t : order) {
        if (std::find(cands.begin(), cands.end(), t) != cands.end()) {
          chosen = t;
          break;
        }
      }
    }
    out.tags.push_back(chosen);
    if (chosen == PosTag::kNoun || chosen == PosTag::kVerb) out.anchors.push_back(i);
  }
  return out;
}

std::optional<std::vector<std::string>> truncate_to_third_last_anchor(
    std::span<const std::string> tokens, const PosLexicon& lexicon) {
  const AnchorAnalysis analysis = tag(tokens, lexicon);
  if (analysis.anchors.size() < 4) return std::nullopt;
  const std::size_t cut = analysis.anchors[analysis.anchors.size() - 3];
  return std::vector<std::string>(tokens.begin(), tokens.begin() + static_cast<long>(cut) + 1);
}

std::vector<SentencePair> make_fun_pairs(std::span<const std::string> fun_lines,
                                         const PosLexicon& lexicon, std::size_t max_len,
                                         FunPairStats* stats) {
  std::vector<SentencePair> pairs;
  FunPairStats local;
  for (const std::string& line : fun_lines) {
    const std::vector<std::string> target = tokenize(line);
    if (target.empty()) continue;  // blank lines are not sentences
    ++local.input;
    auto source = truncate_to_third_last_anchor(target, lexicon);
    if (!source || source->size() > max_len || target.size() > max_len) {
      ++local.skipped;
      continue;
    }
    ++local.emitted;
    pairs.push_back({std::move(*source), target, PairOrigin::kFunSynth});
  }
  if (stats) *stats = local;
  return pairs;
}

double jaccard_similarity(std::span<const std::string> a, std::span<const std::string> b) {
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const std::string& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<SentencePair> make_similar_pairs(std::span<const CaptionRow> rows, double min_jaccard,
                                             std::size_t max_len, SimilarPairStats* stats) {
  struct Entry {
    std::size_t row_index;
    std::vector<std::string> tokens;
    std::string joined;
  };
  std::map<std::string, std::vector<Entry>> by_image;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<std::string> toks = tokenize(rows[i].caption);
    if (toks.empty()) continue;
    std::string joined = join_tokens(toks);
    by_image[rows[i].image_id].push_back({i, std::move(toks), std::move(joined)});
  }

  SimilarPairStats local;
  std::vector<std::pair<std::size_t, SentencePair>> ordered;
  for (const auto& [image_id, entries] : by_image) {
    local.captions += entries.size();
    if (entries.size() < 2) {
      local.dropped += entries.size();
      continue;
    }
    for (const Entry& e : entries) {
      const Entry* best = nullptr;
      double best_sim = -1.0;
      for (const Entry& sib : entries) {
        if (&sib == &e) continue;
        const double sim = jaccard_similarity(e.tokens, sib.tokens);
        if (sim > best_sim || (sim == best_sim && best && sib.joined < best->joined)) {
          best = &sib;
          best_sim = sim;
        }
      }
      if (!best || best_sim < min_jaccard || e.tokens.size() > max_len ||
          best->tokens.size() > max_len) {
        ++local.dropped;
        continue;
      }
      ++local.emitted;
      ordered.emplace_back(e.row_index,
                           SentencePair{e.tokens, best->tokens, PairOrigin::kSimilarCaption});
    }
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<SentencePair> pairs;
  pairs.reserve(ordered.size());
  for (auto& [idx, p] : ordered) pairs.push_back(std::move(p));
  if (stats) *stats = local;
  return pairs;
}

}  // namespace catnet
