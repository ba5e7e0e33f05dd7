#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace pseudolabel {

using ClassId = std::uint8_t;
inline constexpr ClassId kIgnoreLabel = 255;
inline constexpr int kMaxClasses = 254;

struct LabelSpace {
  int num_classes = 40;

  bool is_valid(ClassId c) const { return c < num_classes; }
  /// Valid class or the ignore id.
  bool is_admissible(ClassId c) const { return c == kIgnoreLabel || c < num_classes; }
  void validate() const;
};

/// NYU40 category names indexed by class id (NYU id minus one).
std::string_view nyu40_class_name(ClassId c);

/// Dense row-major image.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(int w, int h) const { return width_ == w && height_ == h; }
  template <typename U>
  bool same_shape(const Grid<U>& o) const { return same_shape(o.width(), o.height()); }

  T& at(int u, int v) { return data_[index(u, v)]; }
  const T& at(int u, int v) const { return data_[index(u, v)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(u);
  }

  std::span<T> pixels() { return data_; }
  std::span<const T> pixels() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using DepthMap = Grid<float>;            // meters, 0 = invalid
using InstanceMap = Grid<std::uint16_t>;  // 0 = no instance
using Bitmap = Grid<std::uint8_t>;       // 0 / 1

enum class LabelRole { kRawPrediction, kMultiview, kRefined, kGroundTruth };

/// Per-pixel class ids; one representation for raw, multi-view, refined and ground-truth maps.
class LabelMap : public Grid<ClassId> {
 public:
  LabelMap() = default;
  LabelMap(int width, int height, LabelRole role, ClassId fill = kIgnoreLabel)
      : Grid<ClassId>(width, height, fill), role_(role) {}
  LabelMap(Grid<ClassId> grid, LabelRole role) : Grid<ClassId>(std::move(grid)), role_(role) {}

  LabelRole role() const { return role_; }
  void set_role(LabelRole role) { role_ = role; }

  /// Throws std::invalid_argument if any value is neither a valid class nor ignore.
  void validate(const LabelSpace& space) const;

  /// Pixel contents only; the role tag does not participate.
  bool operator==(const LabelMap& o) const {
    return static_cast<const Grid<ClassId>&>(*this) == static_cast<const Grid<ClassId>&>(o);
  }

 private:
  LabelRole role_ = LabelRole::kRawPrediction;
};

}  // namespace pseudolabel
