#pragma once

// Flat binary parameter checkpoints.
//
//   "SPLC"  u32 version
//   repeated until EOF:
//     u32 name_len, name bytes (UTF-8), u32 rank, u64 dims[rank], f64 values[prod(dims)]
//
// All integers and floats little-endian.

#include <filesystem>
#include <map>
#include <string>

#include "splice/numcore/layers.hpp"

namespace splice::nc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Params& params);
std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path);
// Copies stored values into `params`; names and shapes must match exactly.
void load_checkpoint(const std::filesystem::path& path, Params& params);

}  // namespace splice::nc
