#include <algorithm>
#include <map>
#include <numeric>
#include <queue>
#include <random>

#include <gtest/gtest.h>

#include "pseudolabel/refinement.hpp"
#include "test_util.hpp"

using namespace pseudolabel;
using namespace testing_util;

namespace {

LabelMap map_from(int w, int h, std::initializer_list<int> values) {
  LabelMap m(w, h, LabelRole::kMultiview);
  std::size_t i = 0;
  for (int x : values) m[i++] = static_cast<ClassId>(x);
  return m;
}

Bitmap rect_mask(int w, int h, int u0, int v0, int u1, int v1) {
  Bitmap b(w, h, 0);
  for (int v = v0; v <= v1; ++v)
    for (int u = u0; u <= u1; ++u) b.at(u, v) = 1;
  return b;
}

/// BFS flood fill; cluster id per pixel, -1 for ignore.
std::vector<int> flood_fill(const LabelMap& m, int conn) {
  std::vector<int> id(m.size(), -1);
  int next = 0;
  for (int v = 0; v < m.height(); ++v) {
    for (int u = 0; u < m.width(); ++u) {
      if (m.at(u, v) == kIgnoreLabel || id[m.index(u, v)] >= 0) continue;
      std::queue<std::pair<int, int>> q;
      q.push({u, v});
      id[m.index(u, v)] = next;
      while (!q.empty()) {
        auto [cu, cv] = q.front();
        q.pop();
        for (int dv = -1; dv <= 1; ++dv) {
          for (int du = -1; du <= 1; ++du) {
            if ((du == 0 && dv == 0) || (conn == 4 && du != 0 && dv != 0)) continue;
            const int nu = cu + du, nv = cv + dv;
            if (nu < 0 || nv < 0 || nu >= m.width() || nv >= m.height()) continue;
            if (m.at(nu, nv) != m.at(u, v) || id[m.index(nu, nv)] >= 0) continue;
            id[m.index(nu, nv)] = next;
            q.push({nu, nv});
          }
        }
      }
      ++next;
    }
  }
  return id;
}

std::optional<ClassId> tally_majority(const Bitmap& b, const LabelMap& m) {
  std::array<std::uint64_t, 256> counts{};
  for (std::size_t i = 0; i < m.size(); ++i)
    if (b[i] && m[i] != kIgnoreLabel) ++counts[m[i]];
  std::optional<ClassId> best;
  for (int c = 0; c < 255; ++c)
    if (counts[c] > 0 && (!best || counts[c] > counts[*best])) best = static_cast<ClassId>(c);
  return best;
}

std::vector<InstanceMask> random_masks(std::mt19937_64& rng, int w, int h) {
  std::vector<InstanceMask> masks;
  const int n = uniform_int(rng, 0, 6);
  for (int j = 0; j < n; ++j) masks.emplace_back(j, random_bitmap(rng, w, h));
  return masks;
}

}  // namespace

TEST(GridPrompts, PaperResolution) {
  const auto p = grid_prompts(320, 240, 32);
  ASSERT_EQ(p.size(), 70u);
  EXPECT_EQ(p[0].point->u, 16);
  EXPECT_EQ(p[0].point->v, 16);
  EXPECT_EQ(p[9].point->u, 304);
  EXPECT_EQ(p[10].point->v, 48);
  EXPECT_EQ(p.back().point->u, 304);
  EXPECT_EQ(p.back().point->v, 208);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(p[i].id, static_cast<int>(i));
    EXPECT_FALSE(p[i].bbox.has_value());
  }
}

TEST(GridPrompts, SmallAndDegenerate) {
  const auto p = grid_prompts(64, 64, 32);
  ASSERT_EQ(p.size(), 4u);
  const std::vector<std::pair<int, int>> want{{16, 16}, {48, 16}, {16, 48}, {48, 48}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(p[i].point->u, want[i].first);
    EXPECT_EQ(p[i].point->v, want[i].second);
  }
  const auto one = grid_prompts(320, 240, 400);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].point->u, 160);
  EXPECT_EQ(one[0].point->v, 120);
  EXPECT_THROW(grid_prompts(320, 240, 0), std::invalid_argument);
}

TEST(GridPrompts, MatchesAnchorEnumeration) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = uniform_int(rng, 1, 200), h = uniform_int(rng, 1, 200), d = uniform_int(rng, 1, 60);
    if (d > w && d > h) continue;
    // An axis too short for its first anchor gets one centered point.
    const auto axis = [d](int n) {
      std::vector<int> a;
      for (int x = d / 2; x < n; x += d) a.push_back(x);
      if (a.empty()) a.push_back(n / 2);
      return a;
    };
    std::vector<std::pair<int, int>> want;
    for (int v : axis(h))
      for (int u : axis(w)) want.push_back({u, v});
    const auto p = grid_prompts(w, h, d);
    ASSERT_EQ(p.size(), want.size()) << w << "x" << h << " d=" << d;
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_EQ(p[i].point->u, want[i].first);
      EXPECT_EQ(p[i].point->v, want[i].second);
    }
  }
}

TEST(InformedPrompts, ThresholdAtPaperConstants) {
  EXPECT_EQ(min_cluster_area(320, 240, 0.1), 77u);
  EXPECT_EQ(min_cluster_area(100, 100, 1.0), 100u);
  EXPECT_EQ(min_cluster_area(10, 10, 0.0), 1u);

  // Clusters of 76 and 77 pixels on a 320x240 ignore background.
  LabelMap m(320, 240, LabelRole::kMultiview);
  for (int i = 0; i < 76; ++i) m.at(10 + i, 10) = 3;
  for (int i = 0; i < 77; ++i) m.at(10 + i, 100) = 4;
  const auto p = informed_prompts(m, 0.1, Connectivity::kEight);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].bbox, (BoundingBox{10, 100, 86, 100}));
}

TEST(InformedPrompts, UniformMapAndSnapping) {
  LabelMap uniform(9, 7, LabelRole::kMultiview, 2);
  const auto p = informed_prompts(uniform, 0.1, Connectivity::kEight);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].bbox, (BoundingBox{0, 0, 8, 6}));
  EXPECT_EQ(p[0].point->u, 4);
  EXPECT_EQ(p[0].point->v, 3);

  // C shape: the centroid lies in the open side, off the cluster.
  LabelMap c(7, 7, LabelRole::kMultiview);
  for (int i = 0; i < 7; ++i) {
    c.at(i, 0) = 1;
    c.at(i, 6) = 1;
    c.at(0, i) = 1;
  }
  const auto q = informed_prompts(c, 0.0, Connectivity::kFour);
  ASSERT_EQ(q.size(), 1u);
  EXPECT_EQ(c.at(q[0].point->u, q[0].point->v), 1);
}

TEST(InformedPrompts, IdsFollowDescendingArea) {
  LabelMap m(20, 5, LabelRole::kMultiview);
  for (int u = 0; u < 3; ++u) m.at(u, 0) = 1;    // 3
  for (int u = 5; u < 12; ++u) m.at(u, 2) = 2;   // 7
  for (int u = 14; u < 19; ++u) m.at(u, 4) = 3;  // 5
  const auto p = informed_prompts(m, 0.0, Connectivity::kEight);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0].bbox->u_min, 5);
  EXPECT_EQ(p[1].bbox->u_min, 14);
  EXPECT_EQ(p[2].bbox->u_min, 0);
  for (int j = 0; j < 3; ++j) EXPECT_EQ(p[j].id, j);
}

TEST(ConnectedComponents, DiagonalNeighbours) {
  LabelMap m(2, 2, LabelRole::kMultiview);
  m.at(0, 0) = 1;
  m.at(1, 1) = 1;
  EXPECT_EQ(connected_components(m, Connectivity::kEight).size(), 1u);
  EXPECT_EQ(connected_components(m, Connectivity::kFour).size(), 2u);
  LabelMap u(5, 4, LabelRole::kMultiview, 0);
  const auto c = connected_components(u, Connectivity::kFour);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].area, 20u);
}

TEST(ConnectedComponents, MatchesFloodFill) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const LabelMap m = random_label_map(rng, 32, 32, uniform_int(rng, 1, 4), 0.2);
    for (Connectivity conn : {Connectivity::kFour, Connectivity::kEight}) {
      const std::vector<int> want = flood_fill(m, static_cast<int>(conn));
      const auto clusters = connected_components(m, conn);
      std::vector<int> got(m.size(), -1);
      for (std::size_t k = 0; k < clusters.size(); ++k) {
        const Cluster& cl = clusters[k];
        EXPECT_EQ(cl.area, cl.pixels.size());
        for (std::uint32_t i : cl.pixels) {
          EXPECT_EQ(got[i], -1);
          EXPECT_EQ(m[i], cl.class_id);
          got[i] = static_cast<int>(k);
        }
      }
      // Same partition: flood fill numbers clusters in scanline order too.
      EXPECT_EQ(got, want);
    }
  }
}

TEST(MajorityClass, Examples) {
  const LabelMap m = map_from(5, 1, {2, 2, 3, 2, kIgnoreLabel});
  EXPECT_EQ(majority_class(InstanceMask(0, Bitmap(5, 1, 1)), m), ClassId{2});
  const LabelMap tie = map_from(4, 1, {2, 1, 2, 1});
  EXPECT_EQ(majority_class(InstanceMask(0, Bitmap(4, 1, 1)), tie), ClassId{1});
  const LabelMap ign(3, 1, LabelRole::kMultiview);
  EXPECT_FALSE(majority_class(InstanceMask(0, Bitmap(3, 1, 1)), ign).has_value());
  InstanceMask empty;
  empty.bitmap = Bitmap(3, 1, 0);
  EXPECT_THROW(majority_class(empty, ign), std::invalid_argument);
}

TEST(MajorityClass, MatchesTallyOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10000; ++trial) {
    const int w = uniform_int(rng, 1, 12), h = uniform_int(rng, 1, 12);
    const LabelMap m = random_label_map(rng, w, h, uniform_int(rng, 1, 6), 0.3);
    const Bitmap b = random_bitmap(rng, w, h);
    ASSERT_EQ(majority_class(InstanceMask(0, b), m), tally_majority(b, m));
  }
}

TEST(OrderMasks, GridSortsByArea) {
  std::vector<InstanceMask> masks;
  const std::vector<int> areas{5, 90, 90, 12};
  for (int j = 0; j < 4; ++j) {
    Bitmap b(10, 10, 0);
    for (int i = 0; i < areas[j]; ++i) b[static_cast<std::size_t>(i)] = 1;
    masks.emplace_back(j, b);
  }
  std::vector<int> ids;
  for (const auto& m : order_masks(masks, PromptStrategy::kGrid)) ids.push_back(m.prompt_id);
  EXPECT_EQ(ids, (std::vector<int>{1, 2, 3, 0}));

  std::reverse(masks.begin(), masks.end());
  ids.clear();
  for (const auto& m : order_masks(masks, PromptStrategy::kInformed)) ids.push_back(m.prompt_id);
  EXPECT_EQ(ids, (std::vector<int>{0, 1, 2, 3}));
}

TEST(OrderMasks, GridMatchesStableSortOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10000; ++trial) {
    auto masks = random_masks(rng, 6, 6);
    for (auto& m : masks) m.prompt_id = uniform_int(rng, 0, 1000) * 8 + m.prompt_id;  // unique
    std::vector<InstanceMask> want = masks;
    std::sort(want.begin(), want.end(),
              [](const auto& a, const auto& b) { return a.prompt_id < b.prompt_id; });
    std::stable_sort(want.begin(), want.end(),
                     [](const auto& a, const auto& b) { return a.area > b.area; });
    std::shuffle(masks.begin(), masks.end(), rng);
    ASSERT_EQ(order_masks(masks, PromptStrategy::kGrid), want);
  }
}

TEST(RefineFrame, Examples) {
  std::mt19937_64 rng(2);
  const LabelMap y = random_label_map(rng, 7, 5, 5);
  EXPECT_EQ(refine_frame(y, {}, PromptStrategy::kGrid), y);
  EXPECT_EQ(refine_frame(y, {}, PromptStrategy::kGrid).role(), LabelRole::kRefined);

  LabelMap m = map_from(3, 2, {2, 2, 5, 3, 2, 5});
  Bitmap b(3, 2, 0);
  b.at(0, 0) = b.at(1, 0) = b.at(0, 1) = b.at(1, 1) = 1;
  const LabelMap out = refine_frame(m, {InstanceMask(0, b)}, PromptStrategy::kGrid);
  EXPECT_EQ(out, map_from(3, 2, {2, 2, 5, 2, 2, 5}));
}

TEST(RefineFrame, SmallMaskInsideLargeMaskWins) {
  LabelMap m(8, 8, LabelRole::kMultiview, 1);
  for (int v = 3; v <= 4; ++v)
    for (int u = 3; u <= 4; ++u) m.at(u, v) = 4;
  const InstanceMask large(0, rect_mask(8, 8, 0, 0, 7, 7));
  const InstanceMask small(1, rect_mask(8, 8, 2, 2, 5, 5));  // 4 of 16 are class 4
  m.at(2, 2) = m.at(5, 5) = m.at(2, 5) = m.at(5, 2) = 4;     // 8 of 16
  m.at(3, 2) = 4;                                            // majority 4 inside
  for (const auto& order : {std::vector{large, small}, std::vector{small, large}}) {
    RefinementStats st;
    const LabelMap out = refine_frame(m, order, PromptStrategy::kGrid, &st);
    for (int v = 0; v < 8; ++v)
      for (int u = 0; u < 8; ++u)
        EXPECT_EQ(out.at(u, v), small.bitmap.at(u, v) ? 4 : 1) << u << "," << v;
    EXPECT_EQ(st.masks_applied, 2u);
    EXPECT_EQ(st.overlap_pixels, 16u);
    EXPECT_EQ(st.pixels_overridden, 64u);
  }
}

TEST(RefineFrame, AllIgnoreMaskIsSkipped) {
  LabelMap m(4, 1, LabelRole::kMultiview);
  m.at(3, 0) = 2;
  Bitmap b(4, 1, 0);
  b.at(0, 0) = b.at(1, 0) = 1;
  RefinementStats st;
  EXPECT_EQ(refine_frame(m, {InstanceMask(0, b)}, PromptStrategy::kGrid, &st), m);
  EXPECT_EQ(st.masks_skipped, 1u);
}

TEST(RefineFrame, RandomizedProperties) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10000; ++trial) {
    const int w = uniform_int(rng, 1, 10), h = uniform_int(rng, 1, 10);
    const LabelMap y = random_label_map(rng, w, h, uniform_int(rng, 1, 5), 0.2);
    auto masks = random_masks(rng, w, h);
    const auto strategy = (trial & 1) ? PromptStrategy::kGrid : PromptStrategy::kInformed;
    const LabelMap out = refine_frame(y, masks, strategy);

    // Last writer in canonical order decides each covered pixel.
    LabelMap want = y;
    for (const auto& mk : order_masks(masks, strategy)) {
      const auto c = tally_majority(mk.bitmap, y);
      if (!c) continue;
      for (std::size_t i = 0; i < want.size(); ++i)
        if (mk.bitmap[i]) want[i] = *c;
    }
    ASSERT_EQ(out, want);

    for (std::size_t i = 0; i < y.size(); ++i) {
      const bool covered =
          std::any_of(masks.begin(), masks.end(), [&](const auto& mk) { return mk.covers(i); });
      if (!covered) ASSERT_EQ(out[i], y[i]);
    }

    std::shuffle(masks.begin(), masks.end(), rng);
    ASSERT_EQ(refine_frame(y, masks, strategy), out);
  }
}

TEST(RefineFrame, ExactMasksRepairPluralityInstances) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    // Ground truth of vertical stripes, each its own instance.
    const int w = 24, h = 10, stripes = uniform_int(rng, 1, 4);
    LabelMap gt(w, h, LabelRole::kGroundTruth);
    std::vector<InstanceMask> masks;
    for (int s = 0; s < stripes; ++s) {
      const auto c = static_cast<ClassId>(uniform_int(rng, 0, 5));
      const int u0 = s * w / stripes, u1 = (s + 1) * w / stripes - 1;
      for (int v = 0; v < h; ++v)
        for (int u = u0; u <= u1; ++u) gt.at(u, v) = c;
      masks.emplace_back(s, rect_mask(w, h, u0, 0, u1, h - 1));
    }
    // Corrupt under 40% of each stripe.
    LabelMap y = gt;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (rng() % 10 < 3) y[i] = static_cast<ClassId>(uniform_int(rng, 0, 5));
    for (const auto& mk : masks) ASSERT_EQ(tally_majority(mk.bitmap, y), tally_majority(mk.bitmap, gt));
    EXPECT_EQ(refine_frame(y, masks, PromptStrategy::kGrid), gt);
  }
}

TEST(Prompt, Validation) {
  Prompt p;
  EXPECT_THROW(p.validate(10, 10), std::invalid_argument);
  p.point = Pixel{3, 4};
  EXPECT_NO_THROW(p.validate(10, 10));
  p.point = Pixel{10, 4};
  EXPECT_THROW(p.validate(10, 10), std::invalid_argument);
  p.point.reset();
  p.bbox = BoundingBox{5, 5, 4, 6};
  EXPECT_THROW(p.validate(10, 10), std::invalid_argument);
  p.bbox = BoundingBox{2, 2, 2, 2};
  EXPECT_NO_THROW(p.validate(10, 10));
}
