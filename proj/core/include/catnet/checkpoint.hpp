#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "catnet/tensor.hpp"
#include "catnet/text.hpp"

namespace catnet {

enum class ModelKind : std::uint32_t { kCaptioner = 1, kHumorizer = 2 };

/// In-memory form of a CATC checkpoint file: model kind, a name->value
/// hyperparameter block, the full vocabulary (embedded so training and
/// inference can never drift apart on token indices), and the named tensors
/// in a fixed order. The file layout (docs/formats.md) is little-endian with
/// a trailing CRC-32 over everything before it; load(save(x)) is
/// bit-identical in every tensor.
struct Checkpoint {
  ModelKind kind = ModelKind::kCaptioner;
  std::map<std::string, double> hyper;
  Vocabulary vocab;
  std::vector<std::pair<std::string, Tensor>> tensors;

  double hyper_at(const std::string& key) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Serialized bytes without touching the filesystem (used by tests and by
/// the byte-identity checks in the trainer).
std::vector<std::uint8_t> checkpoint_bytes(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin);

}  // namespace catnet
