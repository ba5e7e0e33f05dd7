#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "pseudolabel/dataset.hpp"
#include "pseudolabel/errors.hpp"
#include "pseudolabel/synthetic_world.hpp"
#include "test_util.hpp"

using namespace pseudolabel;
using namespace testing_util;
namespace fs = std::filesystem;

namespace {

Pose facing(const Eigen::Vector3d& forward, const Point3& position) {
  const Eigen::Vector3d f = forward.normalized();
  Eigen::Vector3d r = f.cross(Eigen::Vector3d::UnitZ());
  if (r.norm() < 1e-6) r = Eigen::Vector3d::UnitX();
  r.normalize();
  Eigen::Matrix3d m;
  m.col(0) = r;
  m.col(1) = f.cross(r);
  m.col(2) = f;
  return Pose(m, position);
}

bool near_box(const Box& b, const Point3& p, double eps) {
  return (p.array() >= b.min.array() - eps).all() && (p.array() <= b.max.array() + eps).all();
}

bool deep_inside(const Box& b, const Point3& p, double eps) {
  return (p.array() > b.min.array() + eps).all() && (p.array() < b.max.array() - eps).all();
}

}  // namespace

TEST(RenderOracle, WallTwoMetersAhead) {
  Scene scene;
  scene.boxes = {Box{0, 1, Eigen::Vector3d(2.0, -20, -20), Eigen::Vector3d(2.2, 20, 20), true}};
  const CameraIntrinsics k;
  const OracleRender r = render_oracle(scene, facing(Eigen::Vector3d::UnitX(), Point3::Zero()), k);
  for (std::size_t i = 0; i < r.depth.size(); ++i) {
    ASSERT_EQ(r.depth[i], 2.0f);
    ASSERT_EQ(r.labels[i], 0);
    ASSERT_EQ(r.instances[i], 1);
  }
}

TEST(RenderOracle, NearestBoxWins) {
  Scene scene;
  scene.boxes = {Box{0, 1, Eigen::Vector3d(2.0, -20, -20), Eigen::Vector3d(2.2, 20, 20), true},
                 Box{2, 2, Eigen::Vector3d(1.0, -0.2, -0.2), Eigen::Vector3d(1.5, 0.2, 0.2), false}};
  const CameraIntrinsics k;
  const OracleRender r = render_oracle(scene, facing(Eigen::Vector3d::UnitX(), Point3::Zero()), k);
  EXPECT_EQ(r.instances.at(160, 120), 2);
  EXPECT_FLOAT_EQ(r.depth.at(160, 120), 1.0f);
  EXPECT_EQ(r.labels.at(160, 120), 2);
  EXPECT_EQ(r.instances.at(5, 5), 1);

  Scene empty;
  const OracleRender none = render_oracle(empty, Pose::identity(), k);
  EXPECT_EQ(none.depth.at(3, 3), 0.0f);
  EXPECT_EQ(none.labels.at(3, 3), kIgnoreLabel);
}

TEST(RenderOracle, MatchesRayMarching) {
  const Scene scene = default_room_scene();
  const CameraIntrinsics k;
  const auto poses = sample_trajectory(scene, 12, 7);
  for (std::size_t f = 0; f < poses.size(); f += 3) {
    const OracleRender r = render_oracle(scene, poses[f], k);
    for (int v = 3; v < k.height; v += 17) {
      for (int u = 5; u < k.width; u += 23) {
        const double marched = march_depth_oracle(scene, poses[f], k, u, v);
        ASSERT_NEAR(r.depth.at(u, v), marched, 1e-6 + 1e-7 * marched) << u << "," << v;
      }
    }
  }
}

TEST(RenderOracle, SerialAndParallelMatch) {
  const Scene scene = default_room_scene();
  const CameraIntrinsics k;
  const Pose p = sample_trajectory(scene, 1, 3).front();
  const OracleRender a = render_oracle(scene, p, k, Execution::kSerial);
  const OracleRender b = render_oracle(scene, p, k, Execution::kParallel);
  EXPECT_EQ(a.depth, b.depth);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.instances, b.instances);
}

TEST(RenderOracle, UnprojectedPointsLieOnTheirInstance) {
  const Scene scene = default_room_scene();
  const CameraIntrinsics k;
  for (const Pose& p : sample_trajectory(scene, 8, 5)) {
    const OracleRender r = render_oracle(scene, p, k);
    for (int v = 0; v < k.height; v += 4) {
      for (int u = 0; u < k.width; u += 4) {
        if (r.depth.at(u, v) <= 0.0f) continue;
        const Point3 x = p * unproject_pixel(u, v, r.depth.at(u, v), k);
        const Box* own = scene.find_instance(r.instances.at(u, v));
        ASSERT_NE(own, nullptr);
        EXPECT_TRUE(near_box(*own, x, 1e-5));
        for (const Box& b : scene.boxes) EXPECT_FALSE(deep_inside(b, x, 1e-5));
      }
    }
  }
}

TEST(CorruptLabels, RatesAndIdentity) {
  std::mt19937_64 rng(97);
  const LabelSpace space;
  const LabelMap gt = random_label_map(rng, 1000, 1000, 40, 0.0, LabelRole::kGroundTruth);
  const InstanceMap inst(1000, 1000, 1);

  NoiseModel clean;
  EXPECT_EQ(corrupt_labels(gt, inst, {}, clean, 0, space), gt);

  NoiseModel always;
  always.flip_rate = 1.0;
  const LabelMap all = corrupt_labels(gt, inst, {}, always, 0, space);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    ASSERT_NE(all[i], gt[i]);
    ASSERT_TRUE(space.is_valid(all[i]));
  }

  NoiseModel fifth;
  fifth.flip_rate = 0.2;
  fifth.seed = 4;
  const LabelMap some = corrupt_labels(gt, inst, {}, fifth, 3, space);
  std::array<std::size_t, 40> source{};
  for (ClassId c : gt.pixels()) ++source[c];
  const auto dominant = static_cast<ClassId>(std::max_element(source.begin(), source.end()) - source.begin());
  std::size_t flipped = 0, from_dominant = 0;
  std::array<std::size_t, 40> to{};
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (some[i] == gt[i]) continue;
    ++flipped;
    if (gt[i] == dominant) {
      ++from_dominant;
      ++to[some[i]];
    }
  }
  EXPECT_NEAR(static_cast<double>(flipped) / 1e6, 0.2, 0.01);
  // Targets are uniform over the other 39 classes.
  for (int c = 0; c < 40; ++c) {
    if (c == dominant) continue;
    EXPECT_NEAR(static_cast<double>(to[c]), from_dominant / 39.0, 0.25 * from_dominant / 39.0);
  }
  EXPECT_EQ(corrupt_labels(gt, inst, {}, fifth, 3, space), some);
  EXPECT_NE(corrupt_labels(gt, inst, {}, fifth, 4, space), some);
}

TEST(CorruptLabels, PartialViewsBecomeSubstitute) {
  const LabelSpace space;
  LabelMap gt(10, 1, LabelRole::kGroundTruth, 1);
  InstanceMap inst(10, 1, 1);
  for (int u = 6; u < 10; ++u) {
    gt.at(u, 0) = 2;
    inst.at(u, 0) = 7;
  }
  gt.at(0, 0) = kIgnoreLabel;
  NoiseModel n;
  n.visibility_threshold = 0.4;
  n.substitute_class = 0;
  // Instance 7 shows 4 of its 20 best-case pixels: below 0.4.
  const LabelMap out = corrupt_labels(gt, inst, {{1, 6}, {7, 20}}, n, 0, space);
  for (int u = 6; u < 10; ++u) EXPECT_EQ(out.at(u, 0), 0);
  for (int u = 1; u < 6; ++u) EXPECT_EQ(out.at(u, 0), 1);
  EXPECT_EQ(out.at(0, 0), kIgnoreLabel);
  // 8 of 20 is not below 0.4.
  EXPECT_EQ(corrupt_labels(gt, inst, {{1, 6}, {7, 10}}, n, 0, space), LabelMap(gt, LabelRole::kRawPrediction));
}

TEST(Trajectory, DeterministicAndSeesGeometry) {
  const Scene scene = default_room_scene();
  const auto a = sample_trajectory(scene, 60, 9);
  const auto b = sample_trajectory(scene, 60, 9);
  ASSERT_EQ(a.size(), 60u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].matrix(), b[i].matrix());
  EXPECT_NE(sample_trajectory(scene, 60, 10)[5].matrix(), a[5].matrix());

  const auto one = sample_trajectory(scene, 1, 9);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_NO_THROW(Pose(one[0].rotation(), one[0].translation()));

  const CameraIntrinsics k;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    for (const Pose& p : sample_trajectory(scene, 60, seed)) {
      const OracleRender r = render_oracle(scene, p, k);
      std::size_t hit = 0;
      for (float d : r.depth.pixels()) hit += d > 0.0f;
      EXPECT_GE(static_cast<double>(hit) / static_cast<double>(k.num_pixels()), 0.3);
      EXPECT_FALSE(std::any_of(scene.boxes.begin(), scene.boxes.end(),
                               [&](const Box& b) { return b.contains(p.translation()); }));
    }
  }
  EXPECT_THROW(sample_trajectory(scene, 0, 1), std::invalid_argument);
}

TEST(Trajectory, MovesSmoothly) {
  const auto poses = sample_trajectory(default_room_scene(), 60, 4);
  for (std::size_t i = 1; i < poses.size(); ++i) {
    EXPECT_LT((poses[i].translation() - poses[i - 1].translation()).norm(), 0.5);
    const Eigen::Vector3d f0 = poses[i - 1].rotation().col(2), f1 = poses[i].rotation().col(2);
    EXPECT_GT(f0.dot(f1), std::cos(0.6));
  }
}

TEST(Synthesize, CabinetIsPartiallyViewedSomewhere) {
  SceneSpec spec;
  spec.trajectory.seed = 1;
  spec.noise.visibility_threshold = 0.4;
  const SyntheticSequence seq = synthesize(spec);
  std::size_t relabeled = 0;
  for (const Frame& f : seq.frames)
    for (std::size_t i = 0; i < f.prediction.size(); ++i)
      relabeled += (*f.ground_truth)[i] == kCabinetClass && f.prediction[i] == kWallClass;
  EXPECT_GT(relabeled, 0u);
}

TEST(ExportScene, IngestReproducesFramesExactly) {
  SceneSpec spec;
  spec.trajectory.n_frames = 6;
  spec.noise.flip_rate = 0.2;
  spec.noise.seed = 2;
  const SyntheticSequence seq = synthesize(spec);
  TempDir tmp("export");
  export_scene(seq, tmp.path());
  const Sequence in = ingest_scene(tmp.path());
  ASSERT_EQ(in.frames.size(), 6u);
  EXPECT_EQ(in.dropped, 0u);
  EXPECT_EQ(in.intrinsics, seq.intrinsics);
  for (std::size_t n = 0; n < 6; ++n) {
    const Frame f = load_frame(in, in.frames[n], spec.labels);
    const Frame& want = seq.frames[n];
    EXPECT_EQ(f.depth, want.depth);
    EXPECT_EQ(f.prediction, want.prediction);
    EXPECT_EQ(*f.ground_truth, *want.ground_truth);
    EXPECT_EQ(*f.instances, *want.instances);
    EXPECT_EQ(f.pose.matrix(), want.pose.matrix());
    EXPECT_TRUE(fs::exists(f.rgb_path));
  }

  // Millimeter quantization of the in-memory depth against the exact render.
  const OracleRender exact = render_oracle(spec.scene, seq.frames[2].pose, spec.camera);
  for (std::size_t i = 0; i < exact.depth.size(); ++i)
    ASSERT_LE(std::abs(exact.depth[i] - seq.frames[2].depth[i]), 0.0005 + 1e-6);

  SyntheticSequence empty;
  EXPECT_THROW(export_scene(empty, tmp.path() / "e"), std::invalid_argument);
}

TEST(SceneSpec, LoadsTomlAndRejectsBadInput) {
  TempDir tmp("scenespec");
  const fs::path good = tmp.path() / "scene.toml";
  std::ofstream(good) << R"(# two boxes
[[box]]
class = 1
instance = 1
min = [0.0, 0.0, -0.1]
max = [4.0, 3.0, 0.0]
shell = true

[[box]]
class = 2
instance = 5
min = [1.0, 1.0, 0.0]
max = [1.5, 1.5, 1.0]

[camera]
fx = 200.0
fy = 200.0
cx = 80.0
cy = 60.0
width = 160
height = 120

[noise]
p = 0.3
tau = 0.4
substitute = 0
seed = 12

[trajectory]
n_frames = 9
seed = 3
)";
  const SceneSpec s = SceneSpec::load(good);
  ASSERT_EQ(s.scene.boxes.size(), 2u);
  EXPECT_EQ(s.scene.boxes[1].instance_id, 5);
  EXPECT_TRUE(s.scene.boxes[0].shell);
  EXPECT_FALSE(s.scene.boxes[1].shell);
  EXPECT_EQ(s.scene.boxes[1].max, Eigen::Vector3d(1.5, 1.5, 1.0));
  EXPECT_EQ(s.camera.width, 160);
  EXPECT_EQ(s.noise.flip_rate, 0.3);
  EXPECT_EQ(s.noise.visibility_threshold, 0.4);
  EXPECT_EQ(s.noise.seed, 12u);
  EXPECT_EQ(s.trajectory.n_frames, 9u);

  const fs::path defaults = tmp.path() / "defaults.toml";
  std::ofstream(defaults) << "[noise]\np = 0.1\n";
  EXPECT_EQ(SceneSpec::load(defaults).scene.boxes.size(), default_room_scene().boxes.size());

  const auto bad = [&](const std::string& text) {
    const fs::path p = tmp.path() / "bad.toml";
    std::ofstream(p) << text;
    return p;
  };
  EXPECT_THROW(SceneSpec::load(bad("[[box]]\nclass = 1\ninstance = 1\nmin = [0, 0]\nmax = [1, 1, 1]\n")), ConfigError);
  EXPECT_THROW(SceneSpec::load(bad("[[box]]\nclass = 1\ninstance = 1\nmin = [1, 1, 1]\nmax = [0, 0, 0]\n")), ConfigError);
  EXPECT_THROW(SceneSpec::load(bad("[noise]\np = 1.5\n")), ConfigError);
  EXPECT_THROW(SceneSpec::load(bad("[trajectory]\nn_frames = 0\n")), ConfigError);
  EXPECT_THROW(SceneSpec::load(bad("[noise\n")), ConfigError);
  EXPECT_THROW(SceneSpec::load(tmp.path() / "missing.toml"), ConfigError);
}
