#include "pseudolabel/label_map.hpp"

#include <array>
#include <stdexcept>

#include <fmt/format.h>

namespace pseudolabel {

namespace {

constexpr std::array<std::string_view, 40> kNyu40Names = {
    "wall",           "floor",        "cabinet",       "bed",           "chair",
    "sofa",           "table",        "door",          "window",        "bookshelf",
    "picture",        "counter",      "blinds",        "desk",          "shelves",
    "curtain",        "dresser",      "pillow",        "mirror",        "floor mat",
    "clothes",        "ceiling",      "books",         "refrigerator",  "television",
    "paper",          "towel",        "shower curtain", "box",          "whiteboard",
    "person",         "night stand",  "toilet",        "sink",          "lamp",
    "bathtub",        "bag",          "otherstructure", "otherfurniture", "otherprop"};

}  // namespace

void LabelSpace::validate() const {
  if (num_classes < 1 || num_classes > kMaxClasses)
    throw std::invalid_argument(
        fmt::format("num_classes must be in [1, {}], got {}", kMaxClasses, num_classes));
}

std::string_view nyu40_class_name(ClassId c) {
  if (c < kNyu40Names.size()) return kNyu40Names[c];
  if (c == kIgnoreLabel) return "ignore";
  return "unknown";
}

void LabelMap::validate(const LabelSpace& space) const {
  for (std::size_t i = 0; i < size(); ++i) {
    if (!space.is_admissible((*this)[i]))
      throw std::invalid_argument(fmt::format(
          "label {} at pixel ({}, {}) outside the label space", (*this)[i],
          i % static_cast<std::size_t>(width()), i / static_cast<std::size_t>(width())));
  }
}

}  // namespace pseudolabel
