#pragma once

#include <filesystem>
#include <string>

#include "adaptlab/parameters.hpp"

namespace adaptlab {

// Checkpoint container, version 1:
//
//   bytes 0..7   magic "ADLBCKPT"
//   u32 (LE)     format version
//   u64 (LE)     manifest length L
//   L bytes      UTF-8 JSON manifest:
//                  {"version":1, "metadata":<string>,
//                   "tensors":[{"name","group","shape":[..],"dtype":"f64le",
//                               "offset":<byte offset into payload>}, ...]}
//   payload      raw little-endian IEEE-754 binary64 values, tensors stored
//                back to back in manifest order
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const std::string& metadata = {});

struct LoadedCheckpoint {
  ParameterStore params;
  std::string metadata;
};

/// Reads a checkpoint without any expectation about its contents.
LoadedCheckpoint read_checkpoint(const std::filesystem::path& path);

/// Loads values into `params`. The manifest must list exactly the same names
/// with the same shapes and groups; anything else is a DataError.
std::string load_checkpoint(const std::filesystem::path& path, ParameterStore& params);

}  // namespace adaptlab
