#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "pseudolabel/semantic_volume.hpp"

namespace pseudolabel {

namespace {

struct VoxelUpdate {
  VoxelIndex voxel;
  double sdf = 0.0;
  ClassId label = kIgnoreLabel;  // non-ignore: histogram increment instead of a TSDF sample
};

/// Emits the ordered updates of one depth pixel: TSDF samples along the
/// truncation band, then the class observation at the surface voxel.
template <typename Emit>
bool pixel_updates(const SemanticVolume& volume, const Frame& frame,
                   const CameraIntrinsics& intr, int u, int v, Emit&& emit) {
  const double depth = frame.depth.at(u, v);
  if (!(depth > 0.0) || depth > volume.config().max_range) return false;

  const Point3 origin = frame.pose.translation();
  const Point3 point = frame.pose * unproject_pixel(u, v, depth, intr);
  const Eigen::Vector3d ray = point - origin;
  const double dist = ray.norm();
  const Eigen::Vector3d dir = ray / dist;
  const double trunc = volume.truncation();
  const double t0 = std::max(0.0, dist - trunc);
  const double t1 = dist + trunc;

  const VoxelIndex surface = volume.voxel_index(point);
  const auto sdf_of = [&](const VoxelIndex& vi) {
    return dist - (volume.center(vi) - origin).dot(dir);
  };

  bool surface_seen = false;
  for (VoxelRay walk(origin + t0 * dir, dir, t1 - t0, volume.voxel_size()); !walk.done();
       walk.advance()) {
    emit(VoxelUpdate{walk.voxel(), sdf_of(walk.voxel()), kIgnoreLabel});
    surface_seen = surface_seen || walk.voxel() == surface;
  }
  // Rounding at a voxel face can leave the point's own voxel off the walk.
  if (!surface_seen) emit(VoxelUpdate{surface, sdf_of(surface), kIgnoreLabel});

  const ClassId label = frame.prediction.at(u, v);
  if (label != kIgnoreLabel) emit(VoxelUpdate{surface, 0.0, label});
  return true;
}

void apply(SemanticVoxel& voxel, const VoxelUpdate& up, const VolumeConfig& cfg) {
  if (up.label == kIgnoreLabel)
    tsdf_update(voxel, up.sdf, cfg.observation_weight, cfg.truncation, cfg.max_weight);
  else
    semantic_update(voxel, up.label, cfg.labels);
}

IntegrationStats integrate_serial(SemanticVolume& volume, const Frame& frame,
                                  const CameraIntrinsics& intr) {
  IntegrationStats stats;
  const VolumeConfig& cfg = volume.config();
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const bool valid = pixel_updates(volume, frame, intr, u, v, [&](const VoxelUpdate& up) {
        apply(volume.voxel_at(up.voxel), up, cfg);
        if (up.label == kIgnoreLabel)
          ++stats.voxels_touched;
        else
          ++stats.labels_integrated;
      });
      if (valid) ++stats.points_integrated;
    }
  }
  return stats;
}

// Two phases: rays are traced per row in parallel into ordered update lists,
// then updates are grouped by block and each block is owned by one thread.
// Within a block, updates keep pixel order, so every voxel sees the same
// sequence of running-average steps as in the serial path.
IntegrationStats integrate_parallel(SemanticVolume& volume, const Frame& frame,
                                    const CameraIntrinsics& intr) {
  std::vector<std::vector<VoxelUpdate>> rows(static_cast<std::size_t>(intr.height));
  std::vector<IntegrationStats> row_stats(rows.size());
  ExceptionSlot errors;

#pragma omp parallel for schedule(dynamic, 4)
  for (int v = 0; v < intr.height; ++v) {
    errors.run([&] {
      auto& out = rows[static_cast<std::size_t>(v)];
      auto& st = row_stats[static_cast<std::size_t>(v)];
      for (int u = 0; u < intr.width; ++u) {
        if (pixel_updates(volume, frame, intr, u, v, [&](const VoxelUpdate& up) {
              out.push_back(up);
              if (up.label == kIgnoreLabel)
                ++st.voxels_touched;
              else
                ++st.labels_integrated;
            }))
          ++st.points_integrated;
      }
    });
  }
  errors.rethrow();

  IntegrationStats stats;
  std::size_t total = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    stats += row_stats[r];
    total += rows[r].size();
  }
  std::vector<VoxelUpdate> updates;
  updates.reserve(total);
  for (auto& row : rows) updates.insert(updates.end(), row.begin(), row.end());
  rows.clear();

  std::vector<std::pair<BlockIndex, std::uint32_t>> keyed(updates.size());
  for (std::size_t i = 0; i < updates.size(); ++i)
    keyed[i] = {block_of(updates[i].voxel), static_cast<std::uint32_t>(i)};
  std::sort(keyed.begin(), keyed.end());

  struct Group {
    Block* block;
    std::size_t begin;
    std::size_t end;
  };
  std::vector<Group> groups;
  for (std::size_t i = 0; i < keyed.size();) {
    std::size_t j = i + 1;
    while (j < keyed.size() && keyed[j].first == keyed[i].first) ++j;
    groups.push_back({&volume.block_at(keyed[i].first), i, j});
    i = j;
  }

  const VolumeConfig& cfg = volume.config();
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t g = 0; g < groups.size(); ++g) {
    errors.run([&] {
      const Group& grp = groups[g];
      for (std::size_t k = grp.begin; k < grp.end; ++k) {
        const VoxelUpdate& up = updates[keyed[k].second];
        apply(grp.block->voxels[local_offset(up.voxel)], up, cfg);
      }
    });
  }
  errors.rethrow();
  return stats;
}

}  // namespace

IntegrationStats integrate_frame(SemanticVolume& volume, const Frame& frame,
                                 const CameraIntrinsics& intr, Execution exec) {
  intr.validate();
  frame.validate(intr, volume.labels());
  return exec == Execution::kSerial ? integrate_serial(volume, frame, intr)
                                    : integrate_parallel(volume, frame, intr);
}

}  // namespace pseudolabel
