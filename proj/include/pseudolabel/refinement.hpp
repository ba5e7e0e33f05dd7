#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "pseudolabel/geometry.hpp"
#include "pseudolabel/label_map.hpp"

namespace pseudolabel {

/// Inclusive pixel rectangle.
struct BoundingBox {
  int u_min = 0;
  int v_min = 0;
  int u_max = 0;
  int v_max = 0;
  bool operator==(const BoundingBox&) const = default;
  bool contains(int u, int v) const {
    return u >= u_min && u <= u_max && v >= v_min && v <= v_max;
  }
};

struct Prompt {
  int id = 0;
  std::optional<Pixel> point;
  std::optional<BoundingBox> bbox;

  /// Throws std::invalid_argument unless at least one of point/bbox is set,
  /// everything lies inside width x height and the bbox is non-degenerate.
  void validate(int width, int height) const;
  bool operator==(const Prompt&) const = default;
};

/// Segmenter answer to one prompt.
struct InstanceMask {
  int prompt_id = 0;
  Bitmap bitmap;
  std::size_t area = 0;

  InstanceMask() = default;
  InstanceMask(int prompt_id, Bitmap bitmap);  // computes area
  bool covers(std::size_t i) const { return bitmap[i] != 0; }
  /// Throws std::invalid_argument if empty, sized wrongly or area is stale.
  void validate(int width, int height) const;
  bool operator==(const InstanceMask&) const = default;
};

enum class Connectivity { kFour = 4, kEight = 8 };

struct Cluster {
  ClassId class_id = 0;
  std::vector<std::uint32_t> pixels;  // row-major indices, ascending
  std::size_t area = 0;
  BoundingBox bbox;
  double centroid_u = 0.0;
  double centroid_v = 0.0;
};

enum class PromptStrategy { kGrid, kInformed };
std::string_view to_string(PromptStrategy s);
PromptStrategy parse_strategy(std::string_view s);

struct RefinementConfig {
  PromptStrategy strategy = PromptStrategy::kGrid;
  int grid_spacing = 32;           // d
  double min_area_pct = 0.1;       // a, percent of image area
  Connectivity connectivity = Connectivity::kEight;
  void validate() const;
};

/// Point prompts at (d/2 + i*d, d/2 + j*d), ids row-major from 0. When d exceeds
/// both dimensions a single centered point is returned.
std::vector<Prompt> grid_prompts(int width, int height, int spacing);

/// Connected same-class regions; ignore pixels belong to no cluster. Clusters
/// are returned in scanline order of their first pixel.
std::vector<Cluster> connected_components(const LabelMap& labels, Connectivity connectivity);

/// Smallest integer area satisfying area >= pct/100 * width * height, at least 1.
std::size_t min_cluster_area(int width, int height, double min_area_pct);

/// One bbox + point prompt per cluster with area >= min_cluster_area. The point
/// is the member pixel nearest the centroid. Ids follow descending area.
std::vector<Prompt> informed_prompts(const LabelMap& labels, double min_area_pct,
                                     Connectivity connectivity);

/// Most frequent non-ignore class under the mask (lowest id on ties);
/// nullopt when every covered pixel is ignore. Throws on an empty mask.
std::optional<ClassId> majority_class(const InstanceMask& mask, const LabelMap& labels);

/// Canonical application order. Grid: area descending, then prompt id.
/// Informed: prompt id. Remaining ties are broken on bitmap content so that
/// the result does not depend on input order.
std::vector<InstanceMask> order_masks(std::vector<InstanceMask> masks, PromptStrategy strategy);

struct RefinementStats {
  std::size_t masks_applied = 0;
  std::size_t masks_skipped = 0;       // all covered pixels ignore
  std::size_t pixels_overridden = 0;   // covered by at least one applied mask
  std::size_t overlap_pixels = 0;      // covered by more than one applied mask
};

/// Starts from y_mc and overwrites each mask's pixels with its majority class,
/// in order_masks order.
LabelMap refine_frame(const LabelMap& y_mc, const std::vector<InstanceMask>& masks,
                      PromptStrategy strategy, RefinementStats* stats = nullptr);

}  // namespace pseudolabel
