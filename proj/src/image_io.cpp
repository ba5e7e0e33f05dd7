#include "pseudolabel/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <vector>

#include <fmt/format.h>
#include <png.h>

#include "pseudolabel/errors.hpp"

namespace pseudolabel {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError(fmt::format("cannot open {}", path.string()));
  return f;
}

[[noreturn]] void on_png_error(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

/// Decodes into row-major samples of the requested bit depth and channel count.
template <typename Sample>
std::vector<Sample> decode(const fs::path& path, int want_depth, int want_channels, int& width,
                           int& height) {
  FilePtr file = open(path, "rb");
  std::uint8_t sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw FormatError(fmt::format("{}: not a PNG file", path.string()), 0);

  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::bad_alloc();
  }
  std::vector<Sample> data;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(fmt::format("{}: {}", path.string(), error));
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != want_depth || channels != want_channels || (color & PNG_COLOR_MASK_PALETTE)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(fmt::format("{}: expected {}-bit {}-channel image, found {}-bit {}-channel",
                                  path.string(), want_depth, want_channels, depth, channels));
  }
  if (depth == 16) png_set_swap(png);  // PNG stores big-endian samples

  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  data.resize(static_cast<std::size_t>(width) * height * static_cast<std::size_t>(want_channels));
  rows.resize(static_cast<std::size_t>(height));
  const std::size_t stride = static_cast<std::size_t>(width) * static_cast<std::size_t>(want_channels);
  for (int v = 0; v < height; ++v)
    rows[static_cast<std::size_t>(v)] = reinterpret_cast<png_bytep>(data.data() + stride * static_cast<std::size_t>(v));
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return data;
}

template <typename Sample>
void encode(const fs::path& path, const Sample* data, int width, int height, int bit_depth,
            int color_type, int channels) {
  FilePtr file = open(path, "wb");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::bad_alloc();
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError(fmt::format("{}: PNG write failed: {}", path.string(), error));
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  const std::size_t stride = static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
  for (int v = 0; v < height; ++v)
    rows[static_cast<std::size_t>(v)] =
        reinterpret_cast<png_bytep>(const_cast<Sample*>(data + stride * static_cast<std::size_t>(v)));
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

PngInfo read_png_info(const fs::path& path) {
  FilePtr file = open(path, "rb");
  std::uint8_t header[33];
  if (std::fread(header, 1, sizeof header, file.get()) != sizeof header ||
      png_sig_cmp(header, 0, 8) != 0)
    throw FormatError(fmt::format("{}: not a PNG file", path.string()), 0);
  const auto be32 = [&](int at) {
    return static_cast<int>((std::uint32_t{header[at]} << 24) | (std::uint32_t{header[at + 1]} << 16) |
                            (std::uint32_t{header[at + 2]} << 8) | std::uint32_t{header[at + 3]});
  };
  PngInfo info;
  info.width = be32(16);
  info.height = be32(20);
  info.bit_depth = header[24];
  switch (header[25]) {
    case 0: info.channels = 1; break;
    case 2: info.channels = 3; break;
    case 3: info.channels = 1; break;
    case 4: info.channels = 2; break;
    case 6: info.channels = 4; break;
    default: throw FormatError(fmt::format("{}: bad PNG color type", path.string()), 25);
  }
  return info;
}

Grid<std::uint8_t> read_png_u8(const fs::path& path) {
  int w = 0, h = 0;
  auto data = decode<std::uint8_t>(path, 8, 1, w, h);
  Grid<std::uint8_t> out(w, h);
  out.storage() = std::move(data);
  return out;
}

Grid<std::uint16_t> read_png_u16(const fs::path& path) {
  int w = 0, h = 0;
  auto data = decode<std::uint16_t>(path, 16, 1, w, h);
  Grid<std::uint16_t> out(w, h);
  out.storage() = std::move(data);
  return out;
}

void write_png_u8(const fs::path& path, const Grid<std::uint8_t>& image) {
  encode(path, image.storage().data(), image.width(), image.height(), 8, PNG_COLOR_TYPE_GRAY, 1);
}

void write_png_u16(const fs::path& path, const Grid<std::uint16_t>& image) {
  encode(path, image.storage().data(), image.width(), image.height(), 16, PNG_COLOR_TYPE_GRAY, 1);
}

void write_png_rgb(const fs::path& path, const Grid<std::array<std::uint8_t, 3>>& image) {
  static_assert(sizeof(std::array<std::uint8_t, 3>) == 3);
  encode(path, image.storage().data()->data(), image.width(), image.height(), 8,
         PNG_COLOR_TYPE_RGB, 3);
}

float depth_from_mm(std::uint16_t mm) { return static_cast<float>(mm / 1000.0); }

std::uint16_t depth_to_mm(float meters) {
  if (!(meters > 0.0f)) return 0;
  const double mm = std::round(static_cast<double>(meters) * 1000.0);
  if (mm > std::numeric_limits<std::uint16_t>::max()) return 0;
  return static_cast<std::uint16_t>(mm);
}

DepthMap read_depth(const fs::path& path) {
  const auto mm = read_png_u16(path);
  DepthMap depth(mm.width(), mm.height(), 0.0f);
  for (std::size_t i = 0; i < mm.size(); ++i) depth[i] = depth_from_mm(mm[i]);
  return depth;
}

void write_depth(const fs::path& path, const DepthMap& depth) {
  Grid<std::uint16_t> mm(depth.width(), depth.height(), 0);
  for (std::size_t i = 0; i < depth.size(); ++i) mm[i] = depth_to_mm(depth[i]);
  write_png_u16(path, mm);
}

LabelMap read_labels(const fs::path& path, LabelRole role) {
  return LabelMap(read_png_u8(path), role);
}

void write_labels(const fs::path& path, const LabelMap& labels) { write_png_u8(path, labels); }

}  // namespace pseudolabel
