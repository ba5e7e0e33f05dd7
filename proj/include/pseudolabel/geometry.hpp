#pragma once

#include <filesystem>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace pseudolabel {

using Point3 = Eigen::Vector3d;

struct Pixel {
  int u = 0;  // column
  int v = 0;  // row
  bool operator==(const Pixel&) const = default;
};

/// Pinhole model. Integer pixel coordinates address pixel centers.
struct CameraIntrinsics {
  double fx = 250.0;
  double fy = 250.0;
  double cx = 160.0;
  double cy = 120.0;
  int width = 320;
  int height = 240;

  void validate() const;
  bool contains(int u, int v) const {
    return u >= 0 && v >= 0 && u < width && v < height;
  }
  std::size_t num_pixels() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  /// One ASCII line: `fx fy cx cy width height`.
  static CameraIntrinsics load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool operator==(const CameraIntrinsics&) const = default;
};

/// Rigid camera-to-world transform.
class Pose {
 public:
  Pose();
  /// Throws std::invalid_argument unless the rotation is orthonormal with det +1 (tol 1e-6).
  Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

  static Pose from_matrix(const Eigen::Matrix4d& m);
  static Pose identity() { return Pose(); }

  /// Four lines of four floats, row-major 4x4, camera-to-world.
  static Pose load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  Eigen::Matrix4d matrix() const;

  Pose inverse() const;
  Pose operator*(const Pose& rhs) const;
  Point3 operator*(const Point3& p) const { return rotation_ * p + translation_; }

  bool operator==(const Pose& rhs) const {
    return rotation_ == rhs.rotation_ && translation_ == rhs.translation_;
  }

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

/// Continuous image coordinates plus depth along the optical axis.
struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Camera-frame point at the given pixel and depth (meters). Throws
/// std::invalid_argument for out-of-bounds pixels or depth <= 0.
Point3 unproject_pixel(int u, int v, double depth, const CameraIntrinsics& intr);

/// Throws BehindCameraError when p.z <= 0.
Projection project_point(const Point3& p, const CameraIntrinsics& intr);

Point3 transform_point(const Pose& pose, const Point3& p);

/// Camera-frame ray through continuous pixel (u, v), scaled so that z = 1.
inline Eigen::Vector3d pixel_ray(double u, double v, const CameraIntrinsics& intr) {
  return {(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0};
}

}  // namespace pseudolabel
