#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace catnet {

struct EvalInstance {
  std::vector<std::string> candidate;
  std::vector<std::vector<std::string>> references;  // at least one
};

struct BleuReport {
  std::array<double, 4> bleu{};        // BLEU-1..4 in [0, 1]
  std::array<double, 4> precisions{};  // clipped p_n
  double brevity_penalty = 1.0;
  std::size_t candidate_total = 0;  // c: summed candidate lengths
  std::size_t reference_total = 0;  // r: summed closest-reference lengths
};

/// Corpus-level BLEU: clipped n-gram counts summed over the corpus, uniform
/// 1/n weights over orders 1..n, BP = exp(1 - r/c) when c <= r else 1, with
/// r built from the per-instance closest reference length (ties -> shorter).
/// Any zero p_k zeroes every BLEU-n with n >= k.
BleuReport bleu(std::span<const EvalInstance> instances);

struct MeteorReport {
  double precision = 0.0;
  double recall = 0.0;
  double fmean = 0.0;
  double penalty = 0.0;
  double chunks = 0.0;   // corpus values are plain means over instances
  double matches = 0.0;
  double score = 0.0;    // in [0, 1]
};

/// Unigram METEOR with exact + Porter-stem matching stages (no synonym or
/// paraphrase tables). Among maximal alignments the one with fewest chunks
/// wins; the exact search is capped, falling back to in-order pairing per
/// word type on degenerate inputs. Per instance the best-scoring reference
/// counts; the corpus score is the mean over instances.
MeteorReport meteor(std::span<const EvalInstance> instances);

struct CorpusReport {
  BleuReport bleu;
  MeteorReport meteor;
  std::size_t instances = 0;
  std::vector<std::string> missing_ids;  // in outputs but not references
};

/// Reads a model-output TSV (image_id<TAB>caption, one row per id) and a
/// reference TSV (multiple rows per id), tokenizes both sides with the
/// corpus tokenizer, and scores. Output ids without references are listed
/// and excluded.
CorpusReport evaluate_corpus(const std::filesystem::path& outputs_path,
                             const std::filesystem::path& references_path);

/// Plain-text table (scores x100) followed by machine-readable key=value
/// lines.
std::string render_report(const CorpusReport& report);

}  // namespace catnet
