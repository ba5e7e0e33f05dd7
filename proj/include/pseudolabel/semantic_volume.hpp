#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "pseudolabel/frame.hpp"
#include "pseudolabel/geometry.hpp"
#include "pseudolabel/label_map.hpp"
#include "pseudolabel/parallel.hpp"
#include "pseudolabel/voxel_traversal.hpp"

namespace pseudolabel {

struct ClassCount {
  ClassId class_id = 0;
  std::uint32_t count = 0;
  bool operator==(const ClassCount&) const = default;
};

/// TSDF sample plus a sparse class-count histogram (sorted by class id).
struct SemanticVoxel {
  float tsdf = 0.0f;
  float weight = 0.0f;
  std::vector<ClassCount> histogram;

  std::uint32_t count(ClassId c) const;
  std::uint64_t total_count() const;
  /// Most frequent class, lowest id on ties; nullopt for an empty histogram.
  std::optional<ClassId> argmax() const;
  bool observed() const { return weight > 0.0f; }

  bool operator==(const SemanticVoxel&) const = default;
};

/// Truncated running average. Requires w > 0.
void tsdf_update(SemanticVoxel& voxel, double sdf_sample, double w, double truncation,
                 double max_weight);

/// Adds one observation of `class_id`. Throws std::invalid_argument for the
/// ignore id or any id outside the label space.
void semantic_update(SemanticVoxel& voxel, ClassId class_id, const LabelSpace& space);

inline constexpr int kBlockSide = 8;
inline constexpr int kBlockVoxels = kBlockSide * kBlockSide * kBlockSide;

struct Block {
  std::array<SemanticVoxel, kBlockVoxels> voxels;
  bool any_observed() const;
  bool operator==(const Block&) const = default;
};

inline BlockIndex block_of(const VoxelIndex& v) {
  return {v.x >> 3, v.y >> 3, v.z >> 3};
}
inline int local_offset(const VoxelIndex& v) {
  return (v.x & 7) + kBlockSide * ((v.y & 7) + kBlockSide * (v.z & 7));
}

struct VolumeConfig {
  double voxel_size = 0.05;
  double truncation = 0.10;
  double max_weight = 10000.0;
  double observation_weight = 1.0;
  double max_range = 8.0;
  LabelSpace labels;

  /// truncation = factor * voxel_size.
  static VolumeConfig for_voxel_size(double voxel_size, double truncation_factor = 2.0);
  void validate() const;
};

/// Sparse block-hashed semantic TSDF. Single writer; concurrent readers are
/// safe once integration has finished.
class SemanticVolume {
 public:
  explicit SemanticVolume(VolumeConfig config = {});

  const VolumeConfig& config() const { return config_; }
  double voxel_size() const { return config_.voxel_size; }
  double truncation() const { return config_.truncation; }
  const LabelSpace& labels() const { return config_.labels; }

  VoxelIndex voxel_index(const Point3& p) const { return voxel_index_of(p, voxel_size()); }
  Point3 center(const VoxelIndex& v) const { return voxel_center(v, voxel_size()); }

  const Block* find_block(const BlockIndex& b) const;
  Block& block_at(const BlockIndex& b);
  const SemanticVoxel* find_voxel(const VoxelIndex& v) const;
  SemanticVoxel& voxel_at(const VoxelIndex& v);

  std::size_t num_blocks() const { return blocks_.size(); }
  bool empty() const { return blocks_.empty(); }
  /// Block indices in ascending lexicographic order.
  std::vector<BlockIndex> sorted_block_indices() const;
  /// Drops blocks with no observed voxel.
  std::size_t prune();

  /// Same geometry parameters and identical blocks.
  bool operator==(const SemanticVolume& other) const;

 private:
  VolumeConfig config_;
  std::unordered_map<BlockIndex, std::unique_ptr<Block>, Index3Hash> blocks_;
};

struct IntegrationStats {
  std::size_t voxels_touched = 0;      // voxel TSDF updates, counting repeats
  std::size_t points_integrated = 0;   // pixels with valid depth
  std::size_t labels_integrated = 0;   // of those, pixels with a non-ignore prediction

  IntegrationStats& operator+=(const IntegrationStats& o) {
    voxels_touched += o.voxels_touched;
    points_integrated += o.points_integrated;
    labels_integrated += o.labels_integrated;
    return *this;
  }
  bool operator==(const IntegrationStats&) const = default;
};

/// Fuses one frame: every valid depth pixel updates the TSDF along its ray
/// within +-truncation of the surface point, and adds its predicted class to
/// the voxel containing the point. Both execution paths produce bit-identical volumes.
IntegrationStats integrate_frame(SemanticVolume& volume, const Frame& frame,
                                 const CameraIntrinsics& intr,
                                 Execution exec = Execution::kParallel);

struct RayHit {
  Point3 position;
  double distance = 0.0;  // along the ray
  VoxelIndex voxel;       // voxel whose histogram supplied class_id
  ClassId class_id = kIgnoreLabel;
};

/// First positive-to-negative zero crossing between consecutive observed
/// voxels along the ray. `direction` must be unit length.
std::optional<RayHit> raycast_pixel(const SemanticVolume& volume, const Point3& origin,
                                    const Eigen::Vector3d& direction, double max_range);

/// Trilinear TSDF at a point; nullopt unless all eight surrounding voxels are observed.
std::optional<double> interpolate_tsdf(const SemanticVolume& volume, const Point3& p);

/// Refines a crossing bracketed by voxel-center projections t0 < t1 with the
/// trilinear field; falls back to the linear estimate from the two voxel values.
double locate_crossing(const SemanticVolume& volume, const Point3& origin,
                       const Eigen::Vector3d& direction, double t0, double tsdf0, double t1,
                       double tsdf1);

/// Multi-view label map: one raycast per pixel center, misses are ignore.
LabelMap render_labels(const SemanticVolume& volume, const Pose& pose,
                       const CameraIntrinsics& intr, double max_range,
                       Execution exec = Execution::kParallel);

/// World-frame unit ray through the center of pixel (u, v).
Eigen::Vector3d world_ray(const Pose& pose, const CameraIntrinsics& intr, int u, int v);

}  // namespace pseudolabel
