#include "pseudolabel/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

namespace pseudolabel {

void Prompt::validate(int width, int height) const {
  if (!point && !bbox)
    throw std::invalid_argument(fmt::format("prompt {} has neither point nor bbox", id));
  if (point && (point->u < 0 || point->v < 0 || point->u >= width || point->v >= height))
    throw std::invalid_argument(fmt::format("prompt {} point out of bounds", id));
  if (bbox) {
    const auto& b = *bbox;
    if (b.u_min < 0 || b.v_min < 0 || b.u_max >= width || b.v_max >= height)
      throw std::invalid_argument(fmt::format("prompt {} bbox out of bounds", id));
    if (b.u_max < b.u_min || b.v_max < b.v_min)
      throw std::invalid_argument(fmt::format("prompt {} bbox is degenerate", id));
  }
}

InstanceMask::InstanceMask(int id, Bitmap bits) : prompt_id(id), bitmap(std::move(bits)) {
  area = static_cast<std::size_t>(
      std::count_if(bitmap.storage().begin(), bitmap.storage().end(),
                    [](std::uint8_t b) { return b != 0; }));
}

void InstanceMask::validate(int width, int height) const {
  if (!bitmap.same_shape(width, height))
    throw std::invalid_argument(fmt::format("mask for prompt {} is {}x{}, expected {}x{}",
                                            prompt_id, bitmap.width(), bitmap.height(), width,
                                            height));
  const auto set = static_cast<std::size_t>(
      std::count_if(bitmap.storage().begin(), bitmap.storage().end(),
                    [](std::uint8_t b) { return b != 0; }));
  if (set == 0) throw std::invalid_argument(fmt::format("mask for prompt {} is empty", prompt_id));
  if (set != area)
    throw std::invalid_argument(fmt::format("mask for prompt {} area mismatch", prompt_id));
}

std::string_view to_string(PromptStrategy s) {
  return s == PromptStrategy::kGrid ? "grid" : "informed";
}

PromptStrategy parse_strategy(std::string_view s) {
  if (s == "grid") return PromptStrategy::kGrid;
  if (s == "informed") return PromptStrategy::kInformed;
  throw std::invalid_argument(fmt::format("unknown prompt strategy '{}'", s));
}

void RefinementConfig::validate() const {
  if (grid_spacing < 1) throw std::invalid_argument("grid spacing d must be >= 1");
  if (!(min_area_pct >= 0.0 && min_area_pct < 100.0))
    throw std::invalid_argument("min area percentage must be in [0, 100)");
}

std::vector<Prompt> grid_prompts(int width, int height, int spacing) {
  if (spacing < 1) throw std::invalid_argument("grid spacing must be >= 1");
  if (width <= 0 || height <= 0) throw std::invalid_argument("image dimensions must be positive");

  const auto anchors = [spacing](int extent) {
    std::vector<int> out;
    for (int p = spacing / 2; p < extent; p += spacing) out.push_back(p);
    if (out.empty()) out.push_back(extent / 2);
    return out;
  };
  std::vector<int> us = anchors(width);
  std::vector<int> vs = anchors(height);
  if (spacing > width && spacing > height) {
    us = {width / 2};
    vs = {height / 2};
  }

  std::vector<Prompt> prompts;
  prompts.reserve(us.size() * vs.size());
  for (int v : vs)
    for (int u : us) prompts.push_back(Prompt{static_cast<int>(prompts.size()), Pixel{u, v}, {}});
  return prompts;
}

std::vector<Cluster> connected_components(const LabelMap& labels, Connectivity connectivity) {
  const int w = labels.width();
  const int h = labels.height();
  std::vector<std::uint8_t> visited(labels.size(), 0);
  std::vector<Cluster> clusters;
  std::deque<std::uint32_t> queue;

  static constexpr int kDu[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDv[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int num_neighbors = connectivity == Connectivity::kEight ? 8 : 4;

  for (std::size_t seed = 0; seed < labels.size(); ++seed) {
    if (visited[seed] || labels[seed] == kIgnoreLabel) continue;
    Cluster c;
    c.class_id = labels[seed];
    c.bbox = {w, h, -1, -1};
    visited[seed] = 1;
    queue.push_back(static_cast<std::uint32_t>(seed));
    while (!queue.empty()) {
      const std::uint32_t idx = queue.front();
      queue.pop_front();
      c.pixels.push_back(idx);
      const int u = static_cast<int>(idx % static_cast<std::uint32_t>(w));
      const int v = static_cast<int>(idx / static_cast<std::uint32_t>(w));
      for (int k = 0; k < num_neighbors; ++k) {
        const int nu = u + kDu[k];
        const int nv = v + kDv[k];
        if (nu < 0 || nv < 0 || nu >= w || nv >= h) continue;
        const std::size_t n = labels.index(nu, nv);
        if (visited[n] || labels[n] != c.class_id) continue;
        visited[n] = 1;
        queue.push_back(static_cast<std::uint32_t>(n));
      }
    }
    std::sort(c.pixels.begin(), c.pixels.end());
    c.area = c.pixels.size();
    double su = 0.0;
    double sv = 0.0;
    for (std::uint32_t idx : c.pixels) {
      const int u = static_cast<int>(idx % static_cast<std::uint32_t>(w));
      const int v = static_cast<int>(idx / static_cast<std::uint32_t>(w));
      su += u;
      sv += v;
      c.bbox.u_min = std::min(c.bbox.u_min, u);
      c.bbox.v_min = std::min(c.bbox.v_min, v);
      c.bbox.u_max = std::max(c.bbox.u_max, u);
      c.bbox.v_max = std::max(c.bbox.v_max, v);
    }
    c.centroid_u = su / static_cast<double>(c.area);
    c.centroid_v = sv / static_cast<double>(c.area);
    clusters.push_back(std::move(c));
  }
  return clusters;
}

std::size_t min_cluster_area(int width, int height, double min_area_pct) {
  const double exact = min_area_pct / 100.0 * static_cast<double>(width) * height;
  // Absorb representation error so that exact products keep equality.
  const auto area = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::max<std::size_t>(area, 1);
}

std::vector<Prompt> informed_prompts(const LabelMap& labels, double min_area_pct,
                                     Connectivity connectivity) {
  if (labels.role() != LabelRole::kMultiview)
    throw std::invalid_argument("informed prompts are built from a multi-view label map");
  const std::size_t min_area = min_cluster_area(labels.width(), labels.height(), min_area_pct);
  std::vector<Cluster> clusters = connected_components(labels, connectivity);
  std::erase_if(clusters, [min_area](const Cluster& c) { return c.area < min_area; });
  // Clusters arrive in scanline order of their first pixel, which is the tie-break.
  std::stable_sort(clusters.begin(), clusters.end(),
                   [](const Cluster& a, const Cluster& b) { return a.area > b.area; });

  const auto w = static_cast<std::uint32_t>(labels.width());
  std::vector<Prompt> prompts;
  prompts.reserve(clusters.size());
  for (const Cluster& c : clusters) {
    double best = std::numeric_limits<double>::infinity();
    Pixel nearest;
    for (std::uint32_t idx : c.pixels) {
      const int u = static_cast<int>(idx % w);
      const int v = static_cast<int>(idx / w);
      const double d = (u - c.centroid_u) * (u - c.centroid_u) + (v - c.centroid_v) * (v - c.centroid_v);
      if (d < best) {
        best = d;
        nearest = {u, v};
      }
    }
    prompts.push_back(Prompt{static_cast<int>(prompts.size()), nearest, c.bbox});
  }
  return prompts;
}

std::optional<ClassId> majority_class(const InstanceMask& mask, const LabelMap& labels) {
  if (!mask.bitmap.same_shape(labels))
    throw std::invalid_argument("mask and label map dimensions differ");
  if (mask.area == 0) throw std::invalid_argument("empty instance mask");
  std::array<std::size_t, 256> counts{};
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (mask.covers(i)) ++counts[labels[i]];

  std::optional<ClassId> best;
  std::size_t best_count = 0;
  for (int c = 0; c < 256; ++c) {
    if (c == kIgnoreLabel) continue;
    if (counts[static_cast<std::size_t>(c)] > best_count) {
      best_count = counts[static_cast<std::size_t>(c)];
      best = static_cast<ClassId>(c);
    }
  }
  return best;
}

std::vector<InstanceMask> order_masks(std::vector<InstanceMask> masks, PromptStrategy strategy) {
  const auto by_content = [](const InstanceMask& a, const InstanceMask& b) {
    return a.bitmap.storage() < b.bitmap.storage();
  };
  if (strategy == PromptStrategy::kGrid) {
    std::sort(masks.begin(), masks.end(), [&](const InstanceMask& a, const InstanceMask& b) {
      if (a.area != b.area) return a.area > b.area;
      if (a.prompt_id != b.prompt_id) return a.prompt_id < b.prompt_id;
      return by_content(a, b);
    });
  } else {
    std::sort(masks.begin(), masks.end(), [&](const InstanceMask& a, const InstanceMask& b) {
      if (a.prompt_id != b.prompt_id) return a.prompt_id < b.prompt_id;
      if (a.area != b.area) return a.area > b.area;
      return by_content(a, b);
    });
  }
  return masks;
}

LabelMap refine_frame(const LabelMap& y_mc, const std::vector<InstanceMask>& masks,
                      PromptStrategy strategy, RefinementStats* stats) {
  for (const auto& m : masks) {
    if (!m.bitmap.same_shape(y_mc))
      throw std::invalid_argument(fmt::format(
          "mask for prompt {} is {}x{}, labels are {}x{}", m.prompt_id, m.bitmap.width(),
          m.bitmap.height(), y_mc.width(), y_mc.height()));
  }
  LabelMap refined = y_mc;
  refined.set_role(LabelRole::kRefined);

  std::vector<std::uint16_t> coverage;
  if (stats) {
    *stats = {};
    coverage.assign(y_mc.size(), 0);
  }
  for (const InstanceMask& mask : order_masks(masks, strategy)) {
    // The vote always reads y_mc, never partially refined labels.
    const auto cls = majority_class(mask, y_mc);
    if (!cls) {
      if (stats) ++stats->masks_skipped;
      continue;
    }
    for (std::size_t i = 0; i < refined.size(); ++i) {
      if (!mask.covers(i)) continue;
      refined[i] = *cls;
      if (stats && coverage[i] < std::numeric_limits<std::uint16_t>::max()) ++coverage[i];
    }
    if (stats) ++stats->masks_applied;
  }
  if (stats) {
    for (auto c : coverage) {
      if (c > 0) ++stats->pixels_overridden;
      if (c > 1) ++stats->overlap_pixels;
    }
  }
  return refined;
}

}  // namespace pseudolabel
