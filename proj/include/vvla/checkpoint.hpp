#pragma once

#include <string>

#include "vvla/tensor.hpp"

namespace vvla {

// VVCK container: "VVCK", u32 version, u32 entry count, then per entry a u16
// length-prefixed UTF-8 name, u8 rank, u32 extents and the f32 payload. A
// trailing u32 length-prefixed text block carries the run configuration.
struct Checkpoint {
  ParamStore<float> tensors;
  std::string config_text;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace vvla
