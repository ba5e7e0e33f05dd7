#include <cmath>

#include "pseudolabel/semantic_volume.hpp"

namespace pseudolabel {

namespace {

/// Voxel lookup that re-hashes only when the walk crosses into a new block.
class CachedLookup {
 public:
  explicit CachedLookup(const SemanticVolume& volume) : volume_(volume) {}

  const SemanticVoxel* find(const VoxelIndex& v) {
    const BlockIndex b = block_of(v);
    if (!valid_ || b != cached_index_) {
      cached_ = volume_.find_block(b);
      cached_index_ = b;
      valid_ = true;
    }
    return cached_ ? &cached_->voxels[local_offset(v)] : nullptr;
  }

 private:
  const SemanticVolume& volume_;
  const Block* cached_ = nullptr;
  BlockIndex cached_index_;
  bool valid_ = false;
};

}  // namespace

std::optional<double> interpolate_tsdf(const SemanticVolume& volume, const Point3& p) {
  const double vs = volume.voxel_size();
  const Eigen::Vector3d g = p / vs - Eigen::Vector3d::Constant(0.5);
  const VoxelIndex base{static_cast<int>(std::floor(g.x())), static_cast<int>(std::floor(g.y())),
                        static_cast<int>(std::floor(g.z()))};
  const Eigen::Vector3d f(g.x() - base.x, g.y() - base.y, g.z() - base.z);
  double value = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    const int dx = corner & 1, dy = (corner >> 1) & 1, dz = corner >> 2;
    const SemanticVoxel* v = volume.find_voxel({base.x + dx, base.y + dy, base.z + dz});
    if (!v || !v->observed()) return std::nullopt;
    const double w = (dx ? f.x() : 1.0 - f.x()) * (dy ? f.y() : 1.0 - f.y()) * (dz ? f.z() : 1.0 - f.z());
    value += w * v->tsdf;
  }
  return value;
}

double locate_crossing(const SemanticVolume& volume, const Point3& origin, const Eigen::Vector3d& direction,
                       double t0, double tsdf0, double t1, double tsdf1) {
  const double linear = t0 + (t1 - t0) * (tsdf0 / (tsdf0 - tsdf1));
  const auto field = [&](double t) { return interpolate_tsdf(volume, origin + t * direction); };

  // Scan the bracket, padded by half a voxel, for the first sign change of the field.
  const double pad = 0.5 * volume.voxel_size();
  const double step = 0.25 * volume.voxel_size();
  double a = std::max(0.0, t0 - pad);
  std::optional<double> fa = field(a);
  for (double b = a + step; b <= t1 + pad + 1e-12; b += step) {
    const std::optional<double> fb = field(b);
    if (fa && fb && *fa > 0.0 && *fb <= 0.0) {
      double lo = a, hi = b, flo = *fa, fhi = *fb;
      for (int k = 0; k < 30; ++k) {
        const double mid = 0.5 * (lo + hi);
        const std::optional<double> fm = field(mid);
        if (!fm) break;
        if (*fm > 0.0) {
          lo = mid;
          flo = *fm;
        } else {
          hi = mid;
          fhi = *fm;
        }
      }
      return lo + (hi - lo) * (flo / (flo - fhi));
    }
    a = b;
    fa = fb;
  }
  return linear;
}

std::optional<RayHit> raycast_pixel(const SemanticVolume& volume, const Point3& origin,
                                    const Eigen::Vector3d& direction, double max_range) {
  if (volume.empty()) return std::nullopt;
  CachedLookup lookup(volume);

  struct Sample {
    VoxelIndex voxel;
    const SemanticVoxel* data;
    double t;  // projection of the voxel center on the ray
  };
  std::optional<Sample> prev;

  for (VoxelRay walk(origin, direction, max_range, volume.voxel_size()); !walk.done();
       walk.advance()) {
    const SemanticVoxel* vox = lookup.find(walk.voxel());
    if (!vox || !vox->observed()) {
      prev.reset();
      continue;
    }
    const Sample cur{walk.voxel(), vox, (volume.center(walk.voxel()) - origin).dot(direction)};
    if (prev && prev->data->tsdf > 0.0f && cur.data->tsdf <= 0.0f) {
      const double s0 = prev->data->tsdf;
      const double s1 = cur.data->tsdf;
      const double t_hit = locate_crossing(volume, origin, direction, prev->t, s0, cur.t, s1);

      // The bracketing voxel nearer the surface carries the label unless it
      // has no class observations and the other one does.
      const Sample* near = std::abs(s0) <= std::abs(s1) ? &*prev : &cur;
      const Sample* far = near == &cur ? &*prev : &cur;
      if (near->data->histogram.empty() && !far->data->histogram.empty()) std::swap(near, far);

      RayHit hit;
      hit.distance = t_hit;
      hit.position = origin + t_hit * direction;
      hit.voxel = near->voxel;
      hit.class_id = near->data->argmax().value_or(kIgnoreLabel);
      return hit;
    }
    prev = cur;
  }
  return std::nullopt;
}

Eigen::Vector3d world_ray(const Pose& pose, const CameraIntrinsics& intr, int u, int v) {
  return pose.rotation() * pixel_ray(u, v, intr).normalized();
}

LabelMap render_labels(const SemanticVolume& volume, const Pose& pose,
                       const CameraIntrinsics& intr, double max_range, Execution exec) {
  intr.validate();
  LabelMap out(intr.width, intr.height, LabelRole::kMultiview, kIgnoreLabel);
  const Point3 origin = pose.translation();
  const auto render_row = [&](int v) {
    for (int u = 0; u < intr.width; ++u) {
      if (auto hit = raycast_pixel(volume, origin, world_ray(pose, intr, u, v), max_range))
        out.at(u, v) = hit->class_id;
    }
  };

  if (exec == Execution::kSerial) {
    for (int v = 0; v < intr.height; ++v) render_row(v);
  } else {
#pragma omp parallel for schedule(dynamic, 2)
    for (int v = 0; v < intr.height; ++v) render_row(v);
  }
  return out;
}

}  // namespace pseudolabel
