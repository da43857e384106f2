#pragma once

#include <filesystem>

#include "ppd/param_store.hpp"

namespace ppd {

// Parameter checkpoint: magic "PPDCKPT1", u32 format version, u64 entry
// count, then per parameter (u32 name length, name bytes, u32 rank, u64 dims,
// raw little-endian 64-bit reals). Readers reject unknown magic or version.
inline constexpr char kCheckpointMagic[9] = "PPDCKPT1";
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace ppd
