#include "pseudolabel/rle.hpp"

#include <fmt/format.h>

#include "pseudolabel/errors.hpp"

namespace pseudolabel {

std::vector<std::uint32_t> encode_rle(const Bitmap& bitmap) {
  std::vector<std::uint32_t> counts;
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (std::uint8_t bit : bitmap.pixels()) {
    const std::uint8_t b = bit ? 1 : 0;
    if (b != current) {
      counts.push_back(run);
      current = b;
      run = 0;
    }
    ++run;
  }
  counts.push_back(run);
  return counts;
}

Bitmap decode_rle(std::span<const std::uint32_t> counts, int width, int height) {
  if (width < 0 || height < 0) throw FormatError("negative mask dimensions");
  const std::uint64_t expected = static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height);
  std::uint64_t sum = 0;
  for (auto c : counts) sum += c;
  if (sum != expected)
    throw FormatError(fmt::format("RLE counts sum to {}, expected {}x{} = {}", sum, width,
                                  height, expected));
  Bitmap out(width, height, 0);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (auto c : counts) {
    if (value)
      for (std::uint32_t k = 0; k < c; ++k) out[pos + k] = 1;
    pos += c;
    value ^= 1;
  }
  return out;
}

}  // namespace pseudolabel
