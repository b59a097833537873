#include "vvla/checkpoint.hpp"

#include "vvla/binary_io.hpp"

namespace vvla {

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.magic("VVCK");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.str16(name);
    if (t.rank() > 255) throw DataError("tensor rank too large: " + name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (Index e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    w.f32s({t.data(), static_cast<std::size_t>(t.size())});
  }
  w.u32(static_cast<std::uint32_t>(ckpt.config_text.size()));
  w.raw(ckpt.config_text);
  return w.bytes();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "checkpoint");
  r.expect_magic("VVCK");
  const auto version = r.u32();
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.u32();
  Checkpoint out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str16();
    const int rank = r.u8();
    std::vector<Index> shape;
    for (int k = 0; k < rank; ++k) shape.push_back(static_cast<Index>(r.u32()));
    Tensor<float> t(shape);
    r.f32s({t.data(), static_cast<std::size_t>(t.size())});
    out.tensors.add(name, std::move(t));
  }
  if (!r.at_end()) out.config_text = r.raw(r.u32());
  if (!r.at_end()) throw DataError("checkpoint: trailing bytes");
  return out;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) { write_file_bytes(path, encode_checkpoint(ckpt)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace vvla
