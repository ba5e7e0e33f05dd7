#pragma once

#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>

#include <Eigen/Core>

namespace pseudolabel {

struct Index3 {
  int x = 0;
  int y = 0;
  int z = 0;
  auto operator<=>(const Index3&) const = default;
};

struct Index3Hash {
  std::size_t operator()(const Index3& i) const {
    // Large primes for the spatial hash.
    return static_cast<std::size_t>(static_cast<std::uint32_t>(i.x) * 73856093u ^
                                    static_cast<std::uint32_t>(i.y) * 19349669u ^
                                    static_cast<std::uint32_t>(i.z) * 83492791u);
  }
};

using VoxelIndex = Index3;
using BlockIndex = Index3;

inline VoxelIndex voxel_index_of(const Eigen::Vector3d& p, double voxel_size) {
  return {static_cast<int>(std::floor(p.x() / voxel_size)),
          static_cast<int>(std::floor(p.y() / voxel_size)),
          static_cast<int>(std::floor(p.z() / voxel_size))};
}

inline Eigen::Vector3d voxel_center(const VoxelIndex& v, double voxel_size) {
  return {(v.x + 0.5) * voxel_size, (v.y + 0.5) * voxel_size, (v.z + 0.5) * voxel_size};
}

/// DDA grid traversal: visits every voxel pierced by the segment
/// start + t * dir, t in [0, length], in order, one step per voxel.
class VoxelRay {
 public:
  VoxelRay(const Eigen::Vector3d& start, const Eigen::Vector3d& dir, double length,
           double voxel_size)
      : length_(length), voxel_(voxel_index_of(start, voxel_size)) {
    const int idx[3] = {voxel_.x, voxel_.y, voxel_.z};
    for (int a = 0; a < 3; ++a) {
      if (dir[a] > 0.0) {
        step_[a] = 1;
        t_max_[a] = ((idx[a] + 1) * voxel_size - start[a]) / dir[a];
        t_delta_[a] = voxel_size / dir[a];
      } else if (dir[a] < 0.0) {
        step_[a] = -1;
        t_max_[a] = (idx[a] * voxel_size - start[a]) / dir[a];
        t_delta_[a] = -voxel_size / dir[a];
      } else {
        step_[a] = 0;
        t_max_[a] = std::numeric_limits<double>::infinity();
        t_delta_[a] = std::numeric_limits<double>::infinity();
      }
      // floor() and the boundary arithmetic can disagree by an ulp.
      if (t_max_[a] < 0.0) t_max_[a] = 0.0;
    }
  }

  bool done() const { return t_enter_ > length_; }
  const VoxelIndex& voxel() const { return voxel_; }
  double t_enter() const { return t_enter_; }

  void advance() {
    int axis = 0;
    if (t_max_[1] < t_max_[axis]) axis = 1;
    if (t_max_[2] < t_max_[axis]) axis = 2;
    t_enter_ = t_max_[axis];
    t_max_[axis] += t_delta_[axis];
    switch (axis) {
      case 0: voxel_.x += step_[0]; break;
      case 1: voxel_.y += step_[1]; break;
      default: voxel_.z += step_[2]; break;
    }
  }

 private:
  double length_;
  VoxelIndex voxel_;
  double t_enter_ = 0.0;
  int step_[3] = {0, 0, 0};
  double t_max_[3] = {0, 0, 0};
  double t_delta_[3] = {0, 0, 0};
};

}  // namespace pseudolabel
