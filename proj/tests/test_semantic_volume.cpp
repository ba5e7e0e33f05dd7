#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "pseudolabel/errors.hpp"
#include "pseudolabel/semantic_volume.hpp"
#include "pseudolabel/synthetic_world.hpp"
#include "pseudolabel/volume_io.hpp"
#include "test_util.hpp"

using namespace pseudolabel;

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Eigen::Matrix3d look_rotation(const Eigen::Vector3d& forward) {
  const Eigen::Vector3d f = forward.normalized();
  Eigen::Vector3d r = f.cross(Eigen::Vector3d::UnitZ());
  if (r.norm() < 1e-6) r = Eigen::Vector3d::UnitX();
  r.normalize();
  Eigen::Matrix3d m;
  m.col(0) = r;
  m.col(1) = f.cross(r);
  m.col(2) = f;
  return m;
}

/// Frames of the default room from a short trajectory, small camera.
struct SmallScene {
  CameraIntrinsics intr{40.0, 40.0, 32.0, 24.0, 64, 48};
  std::vector<Frame> frames;

  explicit SmallScene(std::size_t n, double flip_rate, std::uint64_t seed) {
    SceneSpec spec;
    spec.camera = intr;
    spec.trajectory = {n, seed};
    spec.noise.flip_rate = flip_rate;
    spec.noise.seed = seed;
    frames = synthesize(spec, Execution::kSerial).frames;
  }
};

bool segment_hits_voxel(const Point3& a, const Point3& b, const VoxelIndex& vi, double vs, double eps) {
  Box box;
  box.min = Eigen::Vector3d(vi.x * vs, vi.y * vs, vi.z * vs).array() - eps;
  box.max = Eigen::Vector3d((vi.x + 1) * vs, (vi.y + 1) * vs, (vi.z + 1) * vs).array() + eps;
  if (box.contains(a)) return true;
  const auto t = intersect_box(box, a, b - a);
  return t && *t <= 1.0;
}

}  // namespace

TEST(Tsdf, RunningAverage) {
  SemanticVoxel v;
  tsdf_update(v, 0.03, 1.0, 0.10, 10000.0);
  tsdf_update(v, 0.01, 1.0, 0.10, 10000.0);
  EXPECT_NEAR(v.tsdf, 0.02f, 1e-7f);
  EXPECT_FLOAT_EQ(v.weight, 2.0f);
}

TEST(Tsdf, ClampsAndCapsWeight) {
  SemanticVoxel v;
  tsdf_update(v, 5.0, 1.0, 0.10, 3.0);
  EXPECT_FLOAT_EQ(v.tsdf, 0.10f);
  for (int i = 0; i < 10; ++i) tsdf_update(v, -0.5, 1.0, 0.10, 3.0);
  EXPECT_FLOAT_EQ(v.weight, 3.0f);
  EXPECT_GE(v.tsdf, -0.10f);
}

TEST(Tsdf, WeightedMeanOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    SemanticVoxel v;
    double num = 0.0, den = 0.0;
    const int n = testing_util::uniform_int(rng, 1, 30);
    for (int i = 0; i < n; ++i) {
      const double s = uniform(rng, -0.09, 0.09);
      const double w = uniform(rng, 0.1, 2.0);
      tsdf_update(v, s, w, 0.1, 1e9);
      num += s * w;
      den += w;
    }
    EXPECT_NEAR(v.tsdf, num / den, 1e-5);
  }
}

TEST(Histogram, CountsArgmaxAndTies) {
  SemanticVoxel v;
  const LabelSpace space;
  EXPECT_FALSE(v.argmax().has_value());
  for (ClassId c : {7, 3, 7, 3, 12}) semantic_update(v, c, space);
  EXPECT_EQ(v.count(7), 2u);
  EXPECT_EQ(v.count(3), 2u);
  EXPECT_EQ(v.total_count(), 5u);
  EXPECT_EQ(v.argmax(), ClassId{3});
  ASSERT_EQ(v.histogram.size(), 3u);
  EXPECT_LT(v.histogram[0].class_id, v.histogram[1].class_id);
  EXPECT_THROW(semantic_update(v, kIgnoreLabel, space), std::invalid_argument);
  EXPECT_THROW(semantic_update(v, 40, space), std::invalid_argument);
}

TEST(Histogram, ArgmaxMatchesDenseTally) {
  std::mt19937_64 rng(8);
  const LabelSpace space{12};
  for (int trial = 0; trial < 500; ++trial) {
    SemanticVoxel v;
    std::array<int, 12> dense{};
    const int n = testing_util::uniform_int(rng, 1, 40);
    for (int i = 0; i < n; ++i) {
      const auto c = static_cast<ClassId>(rng() % 12);
      semantic_update(v, c, space);
      ++dense[c];
    }
    const auto best = static_cast<ClassId>(std::max_element(dense.begin(), dense.end()) - dense.begin());
    EXPECT_EQ(v.argmax(), best);
  }
}

TEST(Volume, BlockAddressingCoversNegativeIndices) {
  SemanticVolume vol;
  const VoxelIndex a{-1, -8, 7};
  EXPECT_EQ(block_of(a), (BlockIndex{-1, -1, 0}));
  EXPECT_EQ(local_offset(a), 7 + 8 * (0 + 8 * 7));
  vol.voxel_at(a).weight = 1.0f;
  ASSERT_NE(vol.find_voxel(a), nullptr);
  EXPECT_EQ(vol.find_voxel(VoxelIndex{-2, -8, 7})->weight, 0.0f);
  EXPECT_EQ(vol.find_voxel(VoxelIndex{0, 0, 0}), nullptr);
}

TEST(Integration, SingleRayTouchesExactlyTheBand) {
  std::mt19937_64 rng(21);
  const CameraIntrinsics one{1.0, 1.0, 0.0, 0.0, 1, 1};
  for (int trial = 0; trial < 300; ++trial) {
    const double vs = trial % 2 ? 0.05 : 0.03;
    SemanticVolume vol(VolumeConfig::for_voxel_size(vs));
    const Point3 origin(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2));
    const Eigen::Vector3d fwd(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    Frame f;
    f.pose = Pose(look_rotation(fwd), origin);
    f.depth = DepthMap(1, 1, static_cast<float>(uniform(rng, 0.3, 4.0)));
    f.prediction = LabelMap(1, 1, LabelRole::kRawPrediction, 5);
    const IntegrationStats st = integrate_frame(vol, f, one, Execution::kSerial);
    EXPECT_EQ(st.points_integrated, 1u);
    EXPECT_EQ(st.labels_integrated, 1u);

    const double dist = f.depth.at(0, 0);
    const Eigen::Vector3d dir = f.pose.rotation().col(2);
    const Point3 point = origin + dist * dir;
    const Point3 a = origin + std::max(0.0, dist - vol.truncation()) * dir;
    const Point3 b = origin + (dist + vol.truncation()) * dir;

    std::set<VoxelIndex> touched;
    for (const auto& bi : vol.sorted_block_indices()) {
      const Block* blk = vol.find_block(bi);
      for (int k = 0; k < kBlockVoxels; ++k) {
        if (!blk->voxels[static_cast<std::size_t>(k)].observed()) continue;
        const VoxelIndex vi{bi.x * 8 + k % 8, bi.y * 8 + (k / 8) % 8, bi.z * 8 + k / 64};
        touched.insert(vi);
        const SemanticVoxel& vox = *vol.find_voxel(vi);
        const double expected = std::clamp(dist - (vol.center(vi) - origin).dot(dir), -vol.truncation(), vol.truncation());
        EXPECT_NEAR(vox.tsdf, expected, 1e-6);
        EXPECT_TRUE(segment_hits_voxel(a, b, vi, vs, 1e-9) || vi == vol.voxel_index(point));
      }
    }
    EXPECT_EQ(st.voxels_touched, touched.size());
    // Dense sampling never finds a voxel the traversal missed.
    for (int s = 0; s <= 4000; ++s) {
      const Point3 p = a + (b - a) * (s / 4000.0);
      EXPECT_TRUE(touched.contains(vol.voxel_index(p)));
    }
    const SemanticVoxel* surf = vol.find_voxel(vol.voxel_index(point));
    ASSERT_NE(surf, nullptr);
    EXPECT_EQ(surf->count(5), 1u);
  }
}

TEST(Integration, IgnoreAndInvalidDepthPixels) {
  const CameraIntrinsics k{10.0, 10.0, 2.0, 1.0, 4, 2};
  SemanticVolume vol;
  Frame f;
  f.pose = Pose::identity();
  f.depth = DepthMap(4, 2, 1.0f);
  f.depth.at(0, 0) = 0.0f;
  f.depth.at(1, 0) = 9.0f;  // beyond max range
  f.prediction = LabelMap(4, 2, LabelRole::kRawPrediction, 3);
  f.prediction.at(2, 0) = kIgnoreLabel;
  const auto st = integrate_frame(vol, f, k);
  EXPECT_EQ(st.points_integrated, 6u);
  EXPECT_EQ(st.labels_integrated, 5u);

  f.prediction.at(3, 1) = 41;
  EXPECT_THROW(integrate_frame(vol, f, k), std::invalid_argument);
  f.prediction = LabelMap(3, 2, LabelRole::kRawPrediction, 3);
  EXPECT_THROW(integrate_frame(vol, f, k), std::invalid_argument);
}

TEST(Integration, HistogramConservation) {
  SmallScene scene(6, 0.3, 3);
  SemanticVolume vol;
  IntegrationStats total;
  std::size_t labeled = 0;
  for (const Frame& f : scene.frames) {
    total += integrate_frame(vol, f, scene.intr);
    for (std::size_t i = 0; i < f.depth.size(); ++i)
      labeled += f.depth[i] > 0.0f && f.depth[i] <= 8.0f && f.prediction[i] != kIgnoreLabel;
  }
  std::uint64_t counted = 0;
  for (const auto& bi : vol.sorted_block_indices())
    for (const auto& v : vol.find_block(bi)->voxels) counted += v.total_count();
  EXPECT_EQ(counted, total.labels_integrated);
  EXPECT_EQ(total.labels_integrated, labeled);
}

TEST(Integration, SerialAndParallelAreBitIdentical) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SmallScene scene(5, 0.2, seed);
    for (double vs : {0.03, 0.05}) {
      SemanticVolume a(VolumeConfig::for_voxel_size(vs));
      SemanticVolume b(VolumeConfig::for_voxel_size(vs));
      IntegrationStats sa, sb;
      for (const Frame& f : scene.frames) {
        sa += integrate_frame(a, f, scene.intr, Execution::kSerial);
        sb += integrate_frame(b, f, scene.intr, Execution::kParallel);
      }
      EXPECT_EQ(sa, sb);
      EXPECT_TRUE(a == b);
      EXPECT_EQ(serialize_volume(a), serialize_volume(b));
    }
  }
}

TEST(Raycast, EmptyVolumeMisses) {
  SemanticVolume vol;
  EXPECT_FALSE(raycast_pixel(vol, Point3::Zero(), Eigen::Vector3d::UnitX(), 8.0).has_value());
  const LabelMap m = render_labels(vol, Pose::identity(), CameraIntrinsics{10, 10, 4, 3, 8, 6}, 8.0);
  for (auto c : m.pixels()) EXPECT_EQ(c, kIgnoreLabel);
  EXPECT_EQ(m.role(), LabelRole::kMultiview);
}

TEST(Raycast, AgreesWithBruteForceMarch) {
  SmallScene scene(8, 0.2, 5);
  for (double vs : {0.03, 0.05}) {
    SemanticVolume vol(VolumeConfig::for_voxel_size(vs));
    for (const Frame& f : scene.frames) integrate_frame(vol, f, scene.intr);
    std::size_t agree = 0, total = 0;
    for (const Frame& f : scene.frames) {
      for (int v = 0; v < scene.intr.height; v += 2) {
        for (int u = 0; u < scene.intr.width; u += 2) {
          const Eigen::Vector3d dir = world_ray(f.pose, scene.intr, u, v);
          const auto fast = raycast_pixel(vol, f.pose.translation(), dir, 8.0);
          const auto slow = march_volume_oracle(vol, f.pose.translation(), dir, 8.0, vs / 256.0);
          ++total;
          // A fine step keeps corner clips the sampler jumps over rare.
          const ClassId a = fast ? fast->class_id : kIgnoreLabel;
          const ClassId b = slow ? slow->class_id : kIgnoreLabel;
          if (fast.has_value() == slow.has_value() && a == b) ++agree;
        }
      }
    }
    EXPECT_GE(static_cast<double>(agree) / total, 0.999) << "voxel " << vs;
  }
}

TEST(Raycast, RenderSerialAndParallelMatch) {
  SmallScene scene(4, 0.2, 9);
  SemanticVolume vol;
  for (const Frame& f : scene.frames) integrate_frame(vol, f, scene.intr);
  for (const Frame& f : scene.frames)
    EXPECT_EQ(render_labels(vol, f.pose, scene.intr, 8.0, Execution::kSerial),
              render_labels(vol, f.pose, scene.intr, 8.0, Execution::kParallel));
}

TEST(Raycast, HeadOnPlaneDepthWithinHalfVoxel) {
  // Single frame facing the plane z = 2.0.
  Scene scene;
  scene.boxes = {Box{3, 1, Eigen::Vector3d(-10, -10, 2.0), Eigen::Vector3d(10, 10, 2.5), false}};
  const CameraIntrinsics k;
  for (double vs : {0.03, 0.05}) {
    SemanticVolume vol(VolumeConfig::for_voxel_size(vs));
    const Pose pose = Pose::identity();
    const OracleRender r = render_oracle(scene, pose, k);
    Frame f{0, r.depth, LabelMap(r.labels, LabelRole::kRawPrediction), pose, "", {}, {}};
    integrate_frame(vol, f, k);
    for (int v = k.height / 4; v < 3 * k.height / 4; ++v) {
      for (int u = k.width / 4; u < 3 * k.width / 4; ++u) {
        const Eigen::Vector3d dir = world_ray(pose, k, u, v);
        const auto hit = raycast_pixel(vol, pose.translation(), dir, 8.0);
        ASSERT_TRUE(hit.has_value());
        EXPECT_NEAR(hit->position.z(), 2.0, 0.5 * vs);
        EXPECT_EQ(hit->class_id, 3);
      }
    }
  }
}

TEST(Raycast, ObliquePlaneDepthWithinHalfVoxel) {
  // Wall x = 2.013 seen from a few nearby poses; rays up to 45 degrees off the normal.
  Scene scene;
  scene.boxes = {Box{0, 1, Eigen::Vector3d(2.013, -5, -5), Eigen::Vector3d(2.5, 5, 5), false}};
  const CameraIntrinsics k;
  for (double vs : {0.03, 0.05}) {
    SemanticVolume vol(VolumeConfig::for_voxel_size(vs));
    std::vector<Pose> poses;
    for (int i = 0; i < 6; ++i) {
      const double yaw = 0.15 * i;
      poses.emplace_back(look_rotation(Eigen::Vector3d(std::cos(yaw), std::sin(yaw), 0.05 * (i % 3 - 1))),
                         Point3(0.0, -0.2 * i, 0.04 * i));
    }
    for (const Pose& p : poses) {
      const OracleRender r = render_oracle(scene, p, k);
      integrate_frame(vol, Frame{0, r.depth, LabelMap(r.labels, LabelRole::kRawPrediction), p, "", {}, {}}, k);
    }
    // Camera depth error; all rays within 30 degrees, nearly all within 45.
    std::size_t n30 = 0, over30 = 0, n45 = 0, over45 = 0;
    for (const Pose& p : poses) {
      for (int v = 20; v < k.height - 20; v += 5) {
        for (int u = 20; u < k.width - 20; u += 5) {
          const Eigen::Vector3d dir = world_ray(p, k, u, v);
          if (dir.x() < std::cos(M_PI / 4)) continue;
          const auto hit = raycast_pixel(vol, p.translation(), dir, 8.0);
          ASSERT_TRUE(hit.has_value());
          EXPECT_EQ(hit->class_id, 0);
          const double truth = (2.013 - p.translation().x()) / dir.x();
          const double err = std::abs(hit->distance - truth) * (p.rotation().transpose() * dir).z();
          const bool over = err > 0.5 * vs;
          ++n45;
          over45 += over;
          if (dir.x() >= std::cos(M_PI / 6)) {
            ++n30;
            over30 += over;
          }
        }
      }
    }
    ASSERT_GT(n30, 1000u);
    EXPECT_EQ(over30, 0u) << "voxel " << vs;
    EXPECT_LE(static_cast<double>(over45) / n45, 0.001) << "voxel " << vs;
  }
}

TEST(VolumeIo, RoundTripIsBitExact) {
  SmallScene scene(3, 0.3, 12);
  SemanticVolume vol(VolumeConfig::for_voxel_size(0.03));
  for (const Frame& f : scene.frames) integrate_frame(vol, f, scene.intr);
  const auto bytes = serialize_volume(vol);
  const SemanticVolume back = deserialize_volume(bytes, vol.config());
  EXPECT_TRUE(back == vol);
  EXPECT_EQ(serialize_volume(back), bytes);

  testing_util::TempDir dir("vol");
  save_volume(vol, dir.path() / "v.svol");
  EXPECT_TRUE(load_volume(dir.path() / "v.svol", vol.config()) == vol);
}

TEST(VolumeIo, CorruptInputReportsOffset) {
  SemanticVolume vol;
  Frame f;
  f.pose = Pose::identity();
  f.depth = DepthMap(4, 4, 1.0f);
  f.prediction = LabelMap(4, 4, LabelRole::kRawPrediction, 2);
  integrate_frame(vol, f, CameraIntrinsics{4, 4, 2, 2, 4, 4});
  auto bytes = serialize_volume(vol);

  auto bad = bytes;
  bad[0] = 'X';
  try {
    deserialize_volume(bad);
    FAIL() << "corrupt magic accepted";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  bad = bytes;
  bad[4] = 9;  // version
  EXPECT_THROW(deserialize_volume(bad), FormatError);
  bad = bytes;
  bad.resize(bytes.size() - 3);
  EXPECT_THROW(deserialize_volume(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(deserialize_volume(bad), FormatError);
  EXPECT_THROW(load_volume("/nonexistent/volume.svol"), DataError);
}
