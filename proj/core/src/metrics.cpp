#include "catnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "catnet/errors.hpp"
#include "catnet/stemmer.hpp"
#include "catnet/text.hpp"

namespace catnet {
namespace {

// ---------------------------------------------------------------- BLEU

std::map<std::vector<std::string>, std::size_t> ngram_counts(
    std::span<const std::string> tokens, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                    tokens.begin() + static_cast<long>(i + n))]++;
  }
  return counts;
}

// ---------------------------------------------------------------- METEOR

using Alignment = std::vector<std::pair<int, int>>;  // (cand pos, ref pos)

std::size_t chunk_count(Alignment a) {
  if (a.empty()) return 0;
  std::sort(a.begin(), a.end());
  std::size_t chunks = 1;
  for (std::size_t i = 1; i < a.size(); ++i) {
    if (!(a[i].first == a[i - 1].first + 1 && a[i].second == a[i - 1].second + 1)) ++chunks;
  }
  return chunks;
}

// All injective assignments of min(|cands|,|refs|) candidate positions onto
// reference positions for one word type.
void enumerate_key_assignments(const std::vector<int>& cands, const std::vector<int>& refs,
                               std::size_t k, std::size_t ci, Alignment& current,
                               std::vector<std::uint8_t>& ref_used,
                               std::vector<Alignment>& out, std::size_t cap) {
  if (current.size() == k) {
    out.push_back(current);
    return;
  }
  if (ci >= cands.size() || out.size() >= cap) return;
  const std::size_t remaining_needed = k - current.size();
  const std::size_t remaining_cands = cands.size() - ci;
  if (remaining_cands > remaining_needed) {
    // skipping this candidate occurrence still leaves enough
    enumerate_key_assignments(cands, refs, k, ci + 1, current, ref_used, out, cap);
  }
  for (std::size_t rj = 0; rj < refs.size() && out.size() < cap; ++rj) {
    if (ref_used[rj]) continue;
    ref_used[rj] = 1;
    current.emplace_back(cands[ci], refs[rj]);
    enumerate_key_assignments(cands, refs, k, ci + 1, current, ref_used, out, cap);
    current.pop_back();
    ref_used[rj] = 0;
  }
}

struct StageKey {
  std::vector<int> cands;
  std::vector<int> refs;
};

std::vector<StageKey> stage_keys(std::span<const std::string> cand,
                                 std::span<const std::string> ref,
                                 const std::vector<std::uint8_t>& cand_used,
                                 const std::vector<std::uint8_t>& ref_used, bool stemmed) {
  std::map<std::string, StageKey> by_key;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (cand_used[i]) continue;
    by_key[stemmed ? porter_stem(cand[i]) : cand[i]].cands.push_back(static_cast<int>(i));
  }
  for (std::size_t j = 0; j < ref.size(); ++j) {
    if (ref_used[j]) continue;
    by_key[stemmed ? porter_stem(ref[j]) : ref[j]].refs.push_back(static_cast<int>(j));
  }
  std::vector<StageKey> keys;
  for (auto& [key, v] : by_key) {
    if (!v.cands.empty() && !v.refs.empty()) keys.push_back(std::move(v));
  }
  return keys;
}

constexpr std::size_t kAlignmentCap = 50000;

// Every combination of per-key assignments for one stage, capped.
std::vector<Alignment> stage_alignments(const std::vector<StageKey>& keys, bool& capped) {
  std::vector<Alignment> result = {{}};
  for (const StageKey& key : keys) {
    const std::size_t k = std::min(key.cands.size(), key.refs.size());
    std::vector<Alignment> options;
    Alignment current;
    std::vector<std::uint8_t> used(key.refs.size(), 0);
    enumerate_key_assignments(key.cands, key.refs, k, 0, current, used, options, kAlignmentCap);
    std::vector<Alignment> next;
    if (result.size() * options.size() > kAlignmentCap) {
      capped = true;
      // in-order fallback: i-th occurrence with i-th occurrence
      Alignment forced;
      for (std::size_t i = 0; i < k; ++i) forced.emplace_back(key.cands[i], key.refs[i]);
      for (Alignment a : result) {
        a.insert(a.end(), forced.begin(), forced.end());
        next.push_back(std::move(a));
      }
    } else {
      for (const Alignment& a : result) {
        for (const Alignment& o : options) {
          Alignment merged = a;
          merged.insert(merged.end(), o.begin(), o.end());
          next.push_back(std::move(merged));
        }
      }
    }
    result = std::move(next);
  }
  return result;
}

struct InstanceMatch {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

// Two-stage maximal alignment (exact, then stems on the leftovers) choosing
// the fewest chunks over the union.
InstanceMatch align(std::span<const std::string> cand, std::span<const std::string> ref) {
  std::vector<std::uint8_t> cand_used(cand.size(), 0), ref_used(ref.size(), 0);
  bool capped = false;
  const std::vector<Alignment> stage1 =
      stage_alignments(stage_keys(cand, ref, cand_used, ref_used, false), capped);

  InstanceMatch best;
  bool have = false;
  for (const Alignment& a1 : stage1) {
    std::vector<std::uint8_t> cu = cand_used, ru = ref_used;
    for (const auto& [ci, rj] : a1) {
      cu[static_cast<std::size_t>(ci)] = 1;
      ru[static_cast<std::size_t>(rj)] = 1;
    }
    bool capped2 = false;
    const std::vector<Alignment> stage2 =
        stage_alignments(stage_keys(cand, ref, cu, ru, true), capped2);
    for (const Alignment& a2 : stage2) {
      Alignment full = a1;
      full.insert(full.end(), a2.begin(), a2.end());
      const InstanceMatch m{full.size(), chunk_count(full)};
      if (!have || m.matches > best.matches ||
          (m.matches == best.matches && m.chunks < best.chunks)) {
        best = m;
        have = true;
      }
    }
    if (capped2) capped = true;
  }
  (void)capped;  // the fallback path is deterministic, nothing to report
  return best;
}

struct InstanceScore {
  double score = 0.0;
  double precision = 0.0, recall = 0.0, fmean = 0.0, penalty = 0.0;
  double chunks = 0.0, matches = 0.0;
};

InstanceScore meteor_instance(const EvalInstance& inst) {
  InstanceScore best;
  for (const auto& ref : inst.references) {
    if (inst.candidate.empty() || ref.empty()) continue;
    const InstanceMatch m = align(inst.candidate, ref);
    if (m.matches == 0) continue;
    InstanceScore s;
    s.matches = static_cast<double>(m.matches);
    s.chunks = static_cast<double>(m.chunks);
    s.precision = s.matches / static_cast<double>(inst.candidate.size());
    s.recall = s.matches / static_cast<double>(ref.size());
    s.fmean = 10.0 * s.precision * s.recall / (s.recall + 9.0 * s.precision);
    const double frag = s.chunks / s.matches;
    s.penalty = 0.5 * frag * frag * frag;
    s.score = s.fmean * (1.0 - s.penalty);
    if (s.score > best.score) best = s;
  }
  return best;
}

}  // namespace

BleuReport bleu(std::span<const EvalInstance> instances) {
  if (instances.empty()) throw DataError("bleu: empty instance list");
  constexpr std::size_t kMaxN = 4;
  std::array<std::size_t, kMaxN> clipped{};
  std::array<std::size_t, kMaxN> total{};
  std::size_t c = 0, r = 0;

  for (const EvalInstance& inst : instances) {
    if (inst.references.empty()) throw DataError("bleu: instance without references");
    c += inst.candidate.size();
    // closest reference length, ties toward the shorter one
    std::size_t best_len = inst.references[0].size();
    for (const auto& ref : inst.references) {
      const auto diff = [&](std::size_t len) {
        return len > inst.candidate.size() ? len - inst.candidate.size()
                                           : inst.candidate.size() - len;
      };
      if (diff(ref.size()) < diff(best_len) ||
          (diff(ref.size()) == diff(best_len) && ref.size() < best_len)) {
        best_len = ref.size();
      }
    }
    r += best_len;

    for (std::size_t n = 1; n <= kMaxN; ++n) {
      const auto cand_counts = ngram_counts(inst.candidate, n);
      std::map<std::vector<std::string>, std::size_t> max_ref;
      for (const auto& ref : inst.references) {
        for (const auto& [gram, count] : ngram_counts(ref, n)) {
          max_ref[gram] = std::max(max_ref[gram], count);
        }
      }
      for (const auto& [gram, count] : cand_counts) {
        total[n - 1] += count;
        auto it = max_ref.find(gram);
        if (it != max_ref.end()) clipped[n - 1] += std::min(count, it->second);
      }
    }
  }

  BleuReport report;
  report.candidate_total = c;
  report.reference_total = r;
  for (std::size_t n = 0; n < kMaxN; ++n) {
    report.precisions[n] =
        total[n] == 0 ? 0.0 : static_cast<double>(clipped[n]) / static_cast<double>(total[n]);
  }
  report.brevity_penalty =
      c == 0 ? 0.0
             : (c > r ? 1.0
                      : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)));
  for (std::size_t n = 1; n <= kMaxN; ++n) {
    double log_sum = 0.0;
    bool zero = false;
    for (std::size_t k = 1; k <= n; ++k) {
      if (report.precisions[k - 1] <= 0.0) {
        zero = true;
        break;
      }
      log_sum += std::log(report.precisions[k - 1]) / static_cast<double>(n);
    }
    report.bleu[n - 1] = zero ? 0.0 : report.brevity_penalty * std::exp(log_sum);
  }
  return report;
}

MeteorReport meteor(std::span<const EvalInstance> instances) {
  if (instances.empty()) throw DataError("meteor: empty instance list");
  MeteorReport report;
  for (const EvalInstance& inst : instances) {
    if (inst.references.empty()) throw DataError("meteor: instance without references");
    const InstanceScore s = meteor_instance(inst);
    report.precision += s.precision;
    report.recall += s.recall;
    report.fmean += s.fmean;
    report.penalty += s.penalty;
    report.chunks += s.chunks;
    report.matches += s.matches;
    report.score += s.score;
  }
  const double n = static_cast<double>(instances.size());
  report.precision /= n;
  report.recall /= n;
  report.fmean /= n;
  report.penalty /= n;
  report.chunks /= n;
  report.matches /= n;
  report.score /= n;
  return report;
}

CorpusReport evaluate_corpus(const std::filesystem::path& outputs_path,
                             const std::filesystem::path& references_path) {
  const std::vector<CaptionRow> outputs = read_caption_file(outputs_path);
  const std::vector<CaptionRow> refs = read_caption_file(references_path);

  std::set<std::string> seen;
  for (const CaptionRow& row : outputs) {
    if (!seen.insert(row.image_id).second) {
      throw DataError(outputs_path.string() + ": duplicate output id '" + row.image_id + "'");
    }
  }
  std::map<std::string, std::vector<std::vector<std::string>>> ref_map;
  for (const CaptionRow& row : refs) {
    ref_map[row.image_id].push_back(tokenize(row.caption));
  }

  CorpusReport report;
  std::vector<EvalInstance> instances;
  for (const CaptionRow& row : outputs) {
    auto it = ref_map.find(row.image_id);
    if (it == ref_map.end()) {
      report.missing_ids.push_back(row.image_id);
      continue;
    }
    instances.push_back({tokenize(row.caption), it->second});
  }
  if (instances.empty()) {
    throw DataError("evaluate: no output ids have references");
  }
  report.instances = instances.size();
  report.bleu = bleu(instances);
  report.meteor = meteor(instances);
  return report;
}

std::string render_report(const CorpusReport& report) {
  char buf[256];
  std::string out;
  out += "# corpus-level BLEU-1..4 and METEOR, scores x100\n";
  out += "# METEOR matcher: exact + Porter-stem stages only (no synonym/paraphrase tables)\n";
  std::snprintf(buf, sizeof(buf), "# instances: %zu", report.instances);
  out += buf;
  if (!report.missing_ids.empty()) {
    std::snprintf(buf, sizeof(buf), "   excluded (no references): %zu",
                  report.missing_ids.size());
    out += buf;
    for (const std::string& id : report.missing_ids) out += " " + id;
  }
  out += "\n";
  out += "BLEU-1  BLEU-2  BLEU-3  BLEU-4  METEOR\n";
  std::snprintf(buf, sizeof(buf), "%6.2f  %6.2f  %6.2f  %6.2f  %6.2f\n", report.bleu.bleu[0] * 100,
                report.bleu.bleu[1] * 100, report.bleu.bleu[2] * 100, report.bleu.bleu[3] * 100,
                report.meteor.score * 100);
  out += buf;
  for (std::size_t n = 0; n < 4; ++n) {
    std::snprintf(buf, sizeof(buf), "bleu%zu=%.6f\n", n + 1, report.bleu.bleu[n] * 100);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "meteor=%.6f\n", report.meteor.score * 100);
  out += buf;
  std::snprintf(buf, sizeof(buf), "brevity_penalty=%.6f\n", report.bleu.brevity_penalty);
  out += buf;
  std::snprintf(buf, sizeof(buf), "candidate_tokens=%zu\nreference_tokens=%zu\n",
                report.bleu.candidate_total, report.bleu.reference_total);
  out += buf;
  return out;
}

}  // namespace catnet
