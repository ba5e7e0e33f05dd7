#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "pseudolabel/frame.hpp"
#include "pseudolabel/geometry.hpp"
#include "pseudolabel/label_map.hpp"

namespace pseudolabel {

// Scene layout:
//   <scene>/intrinsics.txt
//   <scene>/frames/<n:06>.depth.png   16-bit millimeters
//   <scene>/frames/<n:06>.pred.png    8-bit class ids, 255 = ignore
//   <scene>/frames/<n:06>.pose.txt    camera-to-world 4x4
//   optional .color.png, .gt.png, .inst.png (16-bit instance ids)

struct FrameRecord {
  std::size_t index = 0;
  std::filesystem::path depth;
  std::filesystem::path prediction;
  std::filesystem::path pose;
  std::optional<std::filesystem::path> color;
  std::optional<std::filesystem::path> ground_truth;
  std::optional<std::filesystem::path> instances;
};

struct Sequence {
  std::filesystem::path root;
  CameraIntrinsics intrinsics;
  std::vector<FrameRecord> frames;  // strictly increasing indices
  double train_fraction = 0.8;
  std::size_t dropped = 0;          // frames skipped at ingestion

  /// floor(train_fraction * N), at least one frame.
  std::size_t train_count() const;
  std::span<const FrameRecord> train_frames() const;
  std::span<const FrameRecord> test_frames() const;
  const FrameRecord* find(std::size_t index) const;
};

/// Frames lacking depth, prediction or pose, or whose files cannot be read
/// with the expected format and size, are dropped with a warning. Throws
/// DataError for a missing intrinsics file or when no usable frame remains,
/// std::invalid_argument for a train fraction outside (0, 1].
Sequence ingest_scene(const std::filesystem::path& dir, double train_fraction = 0.8);

/// Reads a frame's images. Ground truth and instances are loaded when present.
Frame load_frame(const Sequence& seq, const FrameRecord& record, const LabelSpace& space);

/// `<n:06>.png`
std::filesystem::path label_file(const std::filesystem::path& dir, std::size_t index);

}  // namespace pseudolabel
