#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stdb/tensor.hpp"

namespace stdb {

// Checkpoint container. Little-endian layout:
//   "STDB" | u32 version | u32 config_len | config text
//   u32 tensor_count | per tensor: u32 name_len, name, u32 rank,
//   u64 extents[rank], f64 data[numel]
//   u32 CRC-32 of every preceding byte
// Loading verifies magic, version and CRC before constructing anything;
// round trips are bit exact.
inline constexpr char kCheckpointMagic[4] = {'S', 'T', 'D', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::string config_text;
  std::uint32_t version = kCheckpointVersion;
};

void checkpoint_save(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& config_text);

CheckpointData checkpoint_load(const std::string& path);

}  // namespace stdb
