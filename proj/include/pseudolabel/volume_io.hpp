#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pseudolabel/semantic_volume.hpp"

namespace pseudolabel {

inline constexpr char kVolumeMagic[4] = {'S', 'V', 'O', 'L'};
inline constexpr std::uint32_t kVolumeVersion = 1;

/// Little-endian binary layout:
///   "SVOL" u32 version f64 voxel_size f64 truncation u32 num_classes u64 block_count
///   per block (ascending index): i32 x y z, then 512 voxels of
///     f32 tsdf f32 weight u16 n, n x (u8 class, u32 count)
std::vector<std::uint8_t> serialize_volume(const SemanticVolume& volume);
/// Throws FormatError with the failing byte offset. max_weight and max_range
/// are not stored and come from `defaults`.
SemanticVolume deserialize_volume(const std::vector<std::uint8_t>& bytes,
                                  const VolumeConfig& defaults = {});

void save_volume(const SemanticVolume& volume, const std::filesystem::path& path);
SemanticVolume load_volume(const std::filesystem::path& path, const VolumeConfig& defaults = {});

}  // namespace pseudolabel
