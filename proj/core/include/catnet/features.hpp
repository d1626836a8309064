#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "catnet/tensor.hpp"

namespace catnet {

/// Per-image grid of CNN feature vectors, flattened row-major to
/// [positions, channels]. Extraction itself happens outside this project;
/// files in the CATF format (docs/formats.md) carry the maps in.
struct FeatureMapSet {
  std::string image_id;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t channels = 0;
  Tensor features;  // [grid_h * grid_w, channels]

  std::size_t positions() const { return grid_h * grid_w; }
};

/// CATF reader. Validates magic/version, per-image geometry and that every
/// entry is finite; 32-bit payload floats widen to doubles.
std::vector<FeatureMapSet> read_feature_file(const std::filesystem::path& path);

void write_feature_file(const std::filesystem::path& path, std::span<const FeatureMapSet> maps);

}  // namespace catnet
