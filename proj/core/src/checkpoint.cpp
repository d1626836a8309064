#include "catnet/checkpoint.hpp"

#include <array>
#include <fstream>

#include "catnet/bytesio.hpp"
#include "catnet/errors.hpp"

namespace catnet {
namespace {

constexpr char kMagic[4] = {'C', 'A', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::uint8_t b : data) crc = table[(crc ^ b) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

double Checkpoint::hyper_at(const std::string& key) const {
  auto it = hyper.find(key);
  if (it == hyper.end()) {
    throw CheckpointError("checkpoint missing hyperparameter '" + key + "'");
  }
  return it->second;
}

std::vector<std::uint8_t> checkpoint_bytes(const Checkpoint& ckpt) {
  ByteWriter w;
  w.str(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.kind));

  // hyperparameter block; std::map keeps key order deterministic
  w.u32(static_cast<std::uint32_t>(ckpt.hyper.size()));
  for (const auto& [key, value] : ckpt.hyper) {
    w.u16(static_cast<std::uint16_t>(key.size()));
    w.str(key);
    w.f64(value);
  }

  // embedded vocabulary: tokens with counts in index order, reserved included
  w.u32(static_cast<std::uint32_t>(ckpt.vocab.size()));
  for (std::size_t i = 0; i < ckpt.vocab.size(); ++i) {
    const std::string& tok = ckpt.vocab.token(static_cast<int>(i));
    w.u16(static_cast<std::uint16_t>(tok.size()));
    w.str(tok);
    w.u64(ckpt.vocab.count(static_cast<int>(i)));
  }

  // named tensors
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.str(name);
    w.u8(static_cast<std::uint8_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) w.u64(d);
    for (double v : tensor.vec()) w.f64(v);
  }

  std::vector<std::uint8_t> out = w.data();
  const std::uint32_t crc = crc32(out);
  ByteWriter tail;
  tail.u32(crc);
  out.insert(out.end(), tail.data().begin(), tail.data().end());
  return out;
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin) {
  if (bytes.size() < 12) throw CheckpointError(origin + ": file too small for a CATC checkpoint");
  const std::size_t body = bytes.size() - 4;
  ByteReader tail(bytes.subspan(body));
  const std::uint32_t stored_crc = tail.u32();
  const std::uint32_t actual_crc = crc32(bytes.subspan(0, body));
  if (stored_crc != actual_crc) {
    throw CheckpointError(origin + ": checksum mismatch (corrupt checkpoint)");
  }

  ByteReader r(bytes.subspan(0, body));
  try {
    if (r.str(4) != std::string(kMagic, 4)) {
      throw CheckpointError(origin + ": not a CATC checkpoint");
    }
    const std::uint32_t version = r.u32();
    if (version > kVersion) {
      throw CheckpointError(origin + ": checkpoint version " + std::to_string(version) +
                            " is newer than supported version " + std::to_string(kVersion));
    }
    Checkpoint ckpt;
    const std::uint32_t kind = r.u32();
    if (kind != static_cast<std::uint32_t>(ModelKind::kCaptioner) &&
        kind != static_cast<std::uint32_t>(ModelKind::kHumorizer)) {
      throw CheckpointError(origin + ": unknown model kind " + std::to_string(kind));
    }
    ckpt.kind = static_cast<ModelKind>(kind);

    const std::uint32_t n_hyper = r.u32();
    for (std::uint32_t i = 0; i < n_hyper; ++i) {
      const std::string key = r.str(r.u16());
      ckpt.hyper[key] = r.f64();
    }

    const std::uint32_t n_vocab = r.u32();
    std::map<std::string, std::size_t> counts;
    std::vector<std::pair<std::string, std::size_t>> rows;
    rows.reserve(n_vocab);
    for (std::uint32_t i = 0; i < n_vocab; ++i) {
      std::string tok = r.str(r.u16());
      const std::uint64_t count = r.u64();
      rows.emplace_back(std::move(tok), static_cast<std::size_t>(count));
    }
    ckpt.vocab = Vocabulary::from_rows(rows, origin);

    const std::uint32_t n_tensors = r.u32();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
      std::string name = r.str(r.u16());
      const std::uint8_t rank = r.u8();
      Shape shape(rank);
      for (std::uint8_t d = 0; d < rank; ++d) shape[d] = static_cast<std::size_t>(r.u64());
      std::vector<double> values(shape_numel(shape));
      for (double& v : values) v = r.f64();
      ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    if (!r.exhausted()) {
      throw CheckpointError(origin + ": trailing bytes in checkpoint body");
    }
    return ckpt;
  } catch (const std::out_of_range&) {
    throw CheckpointError(origin + ": truncated checkpoint");
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::vector<std::uint8_t> bytes = checkpoint_bytes(ckpt);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(f),
                                  std::istreambuf_iterator<char>()};
  return parse_checkpoint(bytes, path.string());
}

}  // namespace catnet
