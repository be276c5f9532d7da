#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uwe/tensor.hpp"

namespace uwe {

// Binary layout, little-endian throughout:
//   magic    8 bytes  "UWECKPT\0"
//   version  u32
//   kind     u32 length + UTF-8 bytes (e.g. "prompts", "finetune")
//   config   u64 length + UTF-8 bytes (echo of the run configuration)
//   count    u32
//   count × { name: u32 length + bytes; rank: u32; dims: rank × u64;
//             data: prod(dims) × IEEE-754 binary64 }
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;
  std::string config_echo;
  TensorSet tensors;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck);
Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace uwe
