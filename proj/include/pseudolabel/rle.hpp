#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pseudolabel/label_map.hpp"

namespace pseudolabel {

/// Row-major alternating run lengths, starting with the number of leading
/// zeros (possibly 0). An all-zero bitmap encodes as a single count.
std::vector<std::uint32_t> encode_rle(const Bitmap& bitmap);

/// Throws FormatError when the counts do not sum to width * height.
Bitmap decode_rle(std::span<const std::uint32_t> counts, int width, int height);

}  // namespace pseudolabel
