#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

#include "catnet/captioner.hpp"
#include "catnet/config.hpp"
#include "catnet/humorizer.hpp"

namespace catnet {

enum class HumorPhase { kPretrain, kFinetune };
const char* phase_name(HumorPhase phase);

struct TrainOptions {
  std::filesystem::path out_dir;
  /// FINETUNE initialization; required unless allow_fresh_finetune is set.
  std::optional<std::filesystem::path> init_checkpoint;
  bool allow_fresh_finetune = false;
};

struct TrainResult {
  double final_epoch_loss = 0.0;
  std::size_t steps = 0;
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
  std::size_t skipped = 0;  // records dropped before training
};

/// Teacher-forced captioner training over a features file + caption TSV.
/// Captions whose image id is missing from the features file are skipped
/// with a warning count. Writes <out>/caption.epochN.catc per
/// checkpoint_every epochs, <out>/caption.best.catc at the best epoch mean
/// loss, and <out>/caption.catc at the end (initialization when epochs=0).
/// The train log gets one `step epoch phase loss seconds` line per step.
TrainResult train_caption(const RunConfig& cfg, const TrainOptions& opts, std::ostream& log,
                          std::ostream& info);

/// Seq2seq training over a pair TSV. PRETRAIN starts fresh (optionally from
/// a pretrained embedding file); FINETUNE loads init_checkpoint, refuses
/// architecture mismatches, and reuses its embedded vocabulary.
TrainResult train_humor(const RunConfig& cfg, HumorPhase phase, const TrainOptions& opts,
                        std::ostream& log, std::ostream& info);

/// image_id<TAB>caption rows for every image in the features file, in file
/// order.
void generate_caption_file(const std::filesystem::path& features_path,
                           const std::filesystem::path& caption_ckpt, const DecodeConfig& decode,
                           std::ostream& out);

/// image_id<TAB>factual<TAB>funny rows; the factual column is produced by
/// exactly the code path generate_caption_file uses.
void generate_catnet_file(const std::filesystem::path& features_path,
                          const std::filesystem::path& caption_ckpt,
                          const std::filesystem::path& humor_ckpt, const DecodeConfig& decode,
                          std::ostream& out);

Vocabulary build_vocab_from_files(const std::vector<std::filesystem::path>& caption_files,
                                  const std::vector<std::filesystem::path>& pair_files,
                                  const std::vector<std::filesystem::path>& text_files,
                                  std::size_t min_count);

}  // namespace catnet
