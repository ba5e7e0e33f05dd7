#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "pseudolabel/frame.hpp"
#include "pseudolabel/geometry.hpp"
#include "pseudolabel/label_map.hpp"
#include "pseudolabel/parallel.hpp"
#include "pseudolabel/segmenter.hpp"
#include "pseudolabel/semantic_volume.hpp"

namespace pseudolabel {

/// Axis-aligned solid box. Instance ids start at 1 (0 means background).
struct Box {
  ClassId class_id = 0;
  std::uint16_t instance_id = 1;
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Ones();
  bool shell = false;  // floor, walls, ceiling

  bool contains(const Point3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  Point3 center() const { return 0.5 * (min + max); }
};

struct Scene {
  std::vector<Box> boxes;
  std::uint64_t seed = 0;

  /// Unique instance ids, non-degenerate boxes, classes inside `space`.
  void validate(const LabelSpace& space) const;
  const Box* find_instance(std::uint16_t instance_id) const;
};

inline constexpr ClassId kWallClass = 0;
inline constexpr ClassId kFloorClass = 1;
inline constexpr ClassId kCabinetClass = 2;
inline constexpr ClassId kTableClass = 6;

/// Floor, four walls, a cabinet against one wall and a table. Surfaces are
/// offset so that none of them coincides with a 3 cm or 5 cm voxel face.
Scene default_room_scene();

struct NoiseModel {
  double flip_rate = 0.0;             // p
  double visibility_threshold = 0.0;  // tau
  ClassId substitute_class = kWallClass;
  std::uint64_t seed = 0;
  void validate(const LabelSpace& space) const;
};

struct TrajectoryConfig {
  std::size_t n_frames = 60;
  std::uint64_t seed = 0;
};

struct SceneSpec {
  Scene scene = default_room_scene();
  CameraIntrinsics camera;
  NoiseModel noise;
  TrajectoryConfig trajectory;
  LabelSpace labels;

  /// `[[box]] class, instance, min, max[, shell]`, `[camera]`, `[noise] p tau
  /// substitute seed`, `[trajectory] n_frames seed`. Missing sections keep defaults;
  /// a file without boxes uses the default room. Throws ConfigError.
  static SceneSpec load(const std::filesystem::path& path);
};

struct OracleRender {
  DepthMap depth;  // z-depth in meters, 0 where no surface is hit
  LabelMap labels;
  InstanceMap instances;
};

/// Closed-form ray/box intersection through every pixel center; nearest hit wins.
OracleRender render_oracle(const Scene& scene, const Pose& pose, const CameraIntrinsics& intr,
                           Execution exec = Execution::kParallel);

/// Entry parameter of the ray origin + t * dir into the box, if t > 0.
std::optional<double> intersect_box(const Box& box, const Point3& origin, const Eigen::Vector3d& dir);

/// Independent depth oracle: fixed steps along the pixel ray with point-in-box
/// tests, refined by bisection. Returns 0 when nothing is hit within max_depth.
double march_depth_oracle(const Scene& scene, const Pose& pose, const CameraIntrinsics& intr,
                          int u, int v, double max_depth = 20.0, double step = 0.002);

/// Largest visible pixel count per instance over a set of instance renders.
using VisibleAreas = std::map<std::uint16_t, std::size_t>;
VisibleAreas max_visible_areas(std::span<const InstanceMap> renders);

/// Raw-prediction model: instances seen with less than tau of their maximum
/// visible area are relabeled to the substitute class, then each labeled pixel
/// flips with probability p to a uniformly drawn different class. Deterministic
/// in (noise.seed, frame_index).
LabelMap corrupt_labels(const LabelMap& gt, const InstanceMap& instances,
                        const VisibleAreas& max_areas, const NoiseModel& noise,
                        std::size_t frame_index, const LabelSpace& space);

/// Piecewise-linear positions with yaw/pitch interpolation between random
/// keyframes inside the scene, looking at scene objects. Deterministic in seed.
std::vector<Pose> sample_trajectory(const Scene& scene, std::size_t n_frames, std::uint64_t seed);

struct SyntheticSequence {
  CameraIntrinsics intrinsics;
  std::vector<Frame> frames;  // depth quantized to millimeters, gt and instances filled
};

/// Trajectory, oracle renders and corrupted predictions for a scene spec.
SyntheticSequence synthesize(const SceneSpec& spec, Execution exec = Execution::kParallel);

/// Writes the dataset layout read by ingest_scene:
///   intrinsics.txt, frames/<n:06>.{depth,pred,gt,inst,color}.png, frames/<n:06>.pose.txt
void export_scene(const SyntheticSequence& sequence, const std::filesystem::path& out_dir);

/// Flat color per instance id.
std::array<std::uint8_t, 3> instance_color(std::uint16_t instance_id);

/// Brute-force raycast reference: samples the ray at fixed steps, reading the
/// voxel under each sample, and applies the same zero-crossing and label rule
/// as raycast_pixel.
std::optional<RayHit> march_volume_oracle(const SemanticVolume& volume, const Point3& origin,
                                          const Eigen::Vector3d& direction, double max_range,
                                          double step);

/// Oracle segmenter answer for a synthetic scene, via an instance-id render.
MaskResponse oracle_masks(const Scene& scene, const Pose& pose, const CameraIntrinsics& intr,
                          const MaskRequest& request, const OraclePerturbation& perturbation = {});

}  // namespace pseudolabel
