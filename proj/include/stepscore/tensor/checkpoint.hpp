#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stepscore/tensor/params.hpp"

namespace stepscore::tensor {

/// On-disk layout, all integers little-endian, doubles IEEE-754 little-endian:
///
///   magic    8 bytes  "SSCKPT\0\1"
///   version  u32      (currently 1)
///   step     u64
///   nmeta    u32, then per entry: u32 key length, key, u32 value length, value
///   ntensor  u32, then per tensor:
///            u32 name length, name, u32 rows, u32 cols,
///            f64[rows*cols] value, f64[rows*cols] first moment,
///            f64[rows*cols] second moment   (row-major)
///
/// Nothing time-dependent is stored, so equal inputs give equal bytes.
struct Checkpoint {
  std::uint64_t step = 0;
  std::map<std::string, std::string> meta;
  std::vector<ParamStore::Entry> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize(const ParamStore& params, const std::map<std::string, std::string>& meta);
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const std::map<std::string, std::string>& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies values and optimizer state into an already-built store. Every
/// stored name under `prefix` must exist with the same shape; parameters
/// missing from the checkpoint keep their values. The step counter is only
/// taken over by a full (empty-prefix) restore.
void restore(ParamStore& params, const Checkpoint& ckpt, const std::string& prefix = "");

}  // namespace stepscore::tensor
