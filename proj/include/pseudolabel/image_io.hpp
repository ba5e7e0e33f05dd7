#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "pseudolabel/label_map.hpp"

namespace pseudolabel {

struct PngInfo {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int channels = 0;
};

/// Reads only the header. Throws FormatError for non-PNG input.
PngInfo read_png_info(const std::filesystem::path& path);

/// Single-channel 8-bit image.
Grid<std::uint8_t> read_png_u8(const std::filesystem::path& path);
/// Single-channel 16-bit image.
Grid<std::uint16_t> read_png_u16(const std::filesystem::path& path);

void write_png_u8(const std::filesystem::path& path, const Grid<std::uint8_t>& image);
void write_png_u16(const std::filesystem::path& path, const Grid<std::uint16_t>& image);
void write_png_rgb(const std::filesystem::path& path, const Grid<std::array<std::uint8_t, 3>>& image);

/// Depth files store millimeters; 0 means invalid.
float depth_from_mm(std::uint16_t mm);
std::uint16_t depth_to_mm(float meters);

DepthMap read_depth(const std::filesystem::path& path);
void write_depth(const std::filesystem::path& path, const DepthMap& depth);

LabelMap read_labels(const std::filesystem::path& path, LabelRole role);
void write_labels(const std::filesystem::path& path, const LabelMap& labels);

}  // namespace pseudolabel
