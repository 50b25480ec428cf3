#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "advreg/model.hpp"

namespace advreg {

// Little-endian layout, independent of the host:
//   "ADVRCKPT" | u32 version | u64 fingerprint | u64 step | u32 tensor count
//   per tensor: u32 name length | name bytes | u32 rank | u64 dims[rank] |
//               f64 values (IEEE-754 bits)
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  std::uint64_t step = 0;  // optimizer steps taken
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
// Throws FormatError on bad magic, version mismatch or truncation, and Error
// when the params were not built for `expected`.
Checkpoint decode_checkpoint(const std::string& bytes, const ModelConfig& expected);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace advreg
