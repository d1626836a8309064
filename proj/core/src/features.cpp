#include "catnet/features.hpp"

#include <fstream>

#include "catnet/bytesio.hpp"
#include "catnet/errors.hpp"

namespace catnet {
namespace {

constexpr char kMagic[4] = {'C', 'A', 'T', 'F'};
constexpr std::uint32_t kVersion = 1;

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read feature file " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f),
                                   std::istreambuf_iterator<char>());
}

}  // namespace

std::vector<FeatureMapSet> read_feature_file(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> raw = slurp(path);
  ByteReader r(raw);
  try {
    const std::string magic = r.str(4);
    if (magic != std::string(kMagic, 4)) {
      throw CheckpointError(path.string() + ": not a CATF feature file");
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
      throw DataError(path.string() + ": unsupported CATF version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32();
    std::vector<FeatureMapSet> maps;
    maps.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      FeatureMapSet m;
      const std::uint16_t id_len = r.u16();
      m.image_id = r.str(id_len);
      m.grid_h = r.u16();
      m.grid_w = r.u16();
      m.channels = r.u32();
      if (m.grid_h == 0 || m.grid_w == 0 || m.channels == 0) {
        throw DataError(path.string() + ": image '" + m.image_id + "' has empty geometry");
      }
      const std::size_t n = m.positions() * m.channels;
      std::vector<double> values(n);
      for (std::size_t k = 0; k < n; ++k) values[k] = static_cast<double>(r.f32());
      m.features = Tensor({m.positions(), m.channels}, std::move(values));
      if (!m.features.all_finite()) {
        throw DataError(path.string() + ": image '" + m.image_id + "' has non-finite features");
      }
      maps.push_back(std::move(m));
    }
    if (!r.exhausted()) {
      throw DataError(path.string() + ": trailing bytes after last image");
    }
    return maps;
  } catch (const std::out_of_range&) {
    throw DataError(path.string() + ": truncated CATF file");
  }
}

void write_feature_file(const std::filesystem::path& path, std::span<const FeatureMapSet> maps) {
  ByteWriter w;
  w.str(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(maps.size()));
  for (const FeatureMapSet& m : maps) {
    w.u16(static_cast<std::uint16_t>(m.image_id.size()));
    w.str(m.image_id);
    w.u16(static_cast<std::uint16_t>(m.grid_h));
    w.u16(static_cast<std::uint16_t>(m.grid_w));
    w.u32(static_cast<std::uint32_t>(m.channels));
    for (double v : m.features.vec()) w.f32(static_cast<float>(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write feature file " + path.string());
  f.write(reinterpret_cast<const char*>(w.data().data()),
          static_cast<std::streamsize>(w.data().size()));
}

}  // namespace catnet
