#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "catnet/captioner.hpp"

namespace catnet {

/// Training/inference knobs parsed from a sectioned key = value file
/// (docs/catnet.conf.example documents every key). Unknown keys are
/// rejected; paths are validated by validate_paths() right before use so a
/// config can be written before its data exists.
struct RunConfig {
  struct Model {
    std::string kind = "captioner";  // "captioner" | "humorizer"
    AttentionVariant variant = AttentionVariant::kLocal;
    std::size_t hidden_dim = 256;
    std::size_t embed_dim = 128;
    std::size_t channels = 512;
    std::size_t window = 9;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t d_model = 128;
    std::size_t d_ff = 512;
    double dropout = 0.1;
    std::size_t max_caption_len = 30;
    std::size_t max_pair_len = 40;
  } model;

  struct Training {
    std::uint64_t seed = 1;
    double lr = 3e-4;
    std::size_t batch_size = 16;
    std::size_t epochs = 20;
    std::size_t checkpoint_every = 1;  // epochs between checkpoints; 0 = final/best only
    bool freeze_embeddings = false;
    std::size_t min_count = 2;  // build-vocab threshold
  } training;

  struct Data {
    std::string features;
    std::string captions;
    std::string pairs;
    std::string embeddings;
    std::string lexicon;
    std::string vocab;
  } data;

  struct Decode {
    std::size_t beam_width = 5;
    double length_norm = 0.7;
    std::size_t max_len = 30;
  } decode;

  void validate() const;
};

RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);

}  // namespace catnet
