#pragma once

// Binary checkpoint layout, all integers little-endian:
//
//   magic        8 bytes  "VQRCKPT\0"
//   version      u32
//   header_size  u64
//   header       JSON: {"model": {...}, "adam_step": n,
//                       "tensors": {name: {"dtype": "f32", "shape": [...],
//                                          "offset": b, "length": b}}}
//   payload      raw IEEE-754 f32 values, offsets relative to payload start
//   checksum     u32 CRC-32 of the payload bytes
//
// Optimizer moments are stored as "adam.m.<name>" and "adam.v.<name>".

#include <cstdint>
#include <filesystem>

#include "vqrank/model.hpp"
#include "vqrank/training.hpp"

namespace vqr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParameters<float> params;
  AdamState adam;
};

/// Writes to a sibling temporary file and renames it over `path`.
void save_checkpoint(const ModelParameters<float>& params, const AdamState& adam, const std::filesystem::path& path);

/// Fully validates the file before returning; throws CheckpointError on any
/// format, version, size or checksum problem.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// As above, and throws DimensionError unless the stored model config equals `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace vqr
