#include "pseudolabel/geometry.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>

#include "pseudolabel/errors.hpp"

namespace pseudolabel {

namespace {

constexpr double kRotationTolerance = 1e-6;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0))
    throw std::invalid_argument("focal lengths must be positive");
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("image dimensions must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw std::invalid_argument("principal point outside the image");
}

CameraIntrinsics CameraIntrinsics::load(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  CameraIntrinsics intr;
  if (!(in >> intr.fx >> intr.fy >> intr.cx >> intr.cy >> intr.width >> intr.height))
    throw FormatError(fmt::format("{}: expected `fx fy cx cy width height`", path.string()));
  try {
    intr.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return intr;
}

void CameraIntrinsics::save(const std::filesystem::path& path) const {
  auto out = fmt::output_file(path.string());
  out.print("{:.17g} {:.17g} {:.17g} {:.17g} {} {}\n", fx, fy, cx, cy, width, height);
}

Pose::Pose() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}

Pose::Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite())
    throw std::invalid_argument("pose contains non-finite values");
  const double ortho_err =
      (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho_err > kRotationTolerance)
    throw std::invalid_argument(fmt::format("rotation not orthonormal (error {:.3g})", ortho_err));
  if (std::abs(rotation.determinant() - 1.0) > kRotationTolerance)
    throw std::invalid_argument("rotation determinant is not +1");
}

Pose Pose::from_matrix(const Eigen::Matrix4d& m) {
  const Eigen::RowVector4d last = m.row(3);
  if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > kRotationTolerance)
    throw std::invalid_argument("last pose row must be [0 0 0 1]");
  return Pose(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Pose Pose::inverse() const {
  Pose inv;
  inv.rotation_ = rotation_.transpose();
  inv.translation_ = -(inv.rotation_ * translation_);
  return inv;
}

Pose Pose::operator*(const Pose& rhs) const {
  Pose out;
  out.rotation_ = rotation_ * rhs.rotation_;
  out.translation_ = rotation_ * rhs.translation_ + translation_;
  return out;
}

Pose Pose::load(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      if (!(in >> m(r, c)))
        throw FormatError(fmt::format("{}: expected 16 numbers (4x4 row-major)", path.string()));
  try {
    return from_matrix(m);
  } catch (const std::invalid_argument& e) {
    // A bad rotation is a hard error on every load.
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void Pose::save(const std::filesystem::path& path) const {
  const Eigen::Matrix4d m = matrix();
  auto out = fmt::output_file(path.string());
  for (int r = 0; r < 4; ++r)
    out.print("{:.17g} {:.17g} {:.17g} {:.17g}\n", m(r, 0), m(r, 1), m(r, 2), m(r, 3));
}

Point3 unproject_pixel(int u, int v, double depth, const CameraIntrinsics& intr) {
  if (!intr.contains(u, v))
    throw std::invalid_argument(fmt::format("pixel ({}, {}) out of bounds", u, v));
  if (!(depth > 0.0)) throw std::invalid_argument("depth must be positive");
  return {(u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy, depth};
}

Projection project_point(const Point3& p, const CameraIntrinsics& intr) {
  if (!(p.z() > 0.0)) throw BehindCameraError("point is behind the camera");
  return {intr.fx * p.x() / p.z() + intr.cx, intr.fy * p.y() / p.z() + intr.cy, p.z()};
}

Point3 transform_point(const Pose& pose, const Point3& p) { return pose * p; }

}  // namespace pseudolabel
