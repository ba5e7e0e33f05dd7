#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "pseudolabel/geometry.hpp"
#include "pseudolabel/label_map.hpp"

namespace pseudolabel {

/// One localized RGB-D observation with its per-frame semantic prediction.
struct Frame {
  std::size_t index = 0;
  DepthMap depth;
  LabelMap prediction;
  Pose pose;
  std::string rgb_path;
  std::optional<LabelMap> ground_truth;
  std::optional<InstanceMap> instances;

  /// Throws std::invalid_argument on dimension or label-space mismatches.
  void validate(const CameraIntrinsics& intr, const LabelSpace& space) const;
};

}  // namespace pseudolabel
