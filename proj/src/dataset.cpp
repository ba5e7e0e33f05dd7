#include "pseudolabel/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "pseudolabel/errors.hpp"
#include "pseudolabel/image_io.hpp"

namespace pseudolabel {

namespace fs = std::filesystem;

namespace {

std::optional<std::size_t> frame_index_of(const std::string& name) {
  if (name.size() < 8 || name[6] != '.') return std::nullopt;
  if (!std::all_of(name.begin(), name.begin() + 6, [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    return std::nullopt;
  return static_cast<std::size_t>(std::stoul(name.substr(0, 6)));
}

std::optional<fs::path> existing(const fs::path& p) {
  if (fs::is_regular_file(p)) return p;
  return std::nullopt;
}

/// Empty string when the image header matches; otherwise the reason.
std::string check_png(const fs::path& path, int bit_depth, int channels, const CameraIntrinsics& intr) {
  try {
    const PngInfo info = read_png_info(path);
    if (info.bit_depth != bit_depth || info.channels != channels)
      return fmt::format("{} is {}-bit {}-channel", path.filename().string(), info.bit_depth, info.channels);
    if (info.width != intr.width || info.height != intr.height)
      return fmt::format("{} is {}x{}", path.filename().string(), info.width, info.height);
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

std::size_t Sequence::train_count() const {
  const auto n = static_cast<std::size_t>(train_fraction * static_cast<double>(frames.size()) + 1e-9);
  return std::clamp<std::size_t>(n, 1, frames.size());
}

std::span<const FrameRecord> Sequence::train_frames() const {
  return std::span(frames).first(train_count());
}

std::span<const FrameRecord> Sequence::test_frames() const {
  return std::span(frames).subspan(train_count());
}

const FrameRecord* Sequence::find(std::size_t index) const {
  auto it = std::lower_bound(frames.begin(), frames.end(), index,
                             [](const FrameRecord& r, std::size_t i) { return r.index < i; });
  return it != frames.end() && it->index == index ? &*it : nullptr;
}

fs::path label_file(const fs::path& dir, std::size_t index) {
  return dir / fmt::format("{:06}.png", index);
}

Sequence ingest_scene(const fs::path& dir, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw std::invalid_argument(fmt::format("train fraction {} outside (0, 1]", train_fraction));
  if (!fs::is_directory(dir)) throw DataError(fmt::format("{} is not a directory", dir.string()));

  Sequence seq;
  seq.root = dir;
  seq.train_fraction = train_fraction;
  const fs::path intrinsics = dir / "intrinsics.txt";
  if (!fs::is_regular_file(intrinsics)) throw DataError(fmt::format("missing {}", intrinsics.string()));
  try {
    seq.intrinsics = CameraIntrinsics::load(intrinsics);
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(fmt::format("{}: {}", intrinsics.string(), e.what()));
  }

  const fs::path frames = dir / "frames";
  std::set<std::size_t> indices;
  if (fs::is_directory(frames)) {
    for (const auto& entry : fs::directory_iterator(frames)) {
      if (auto n = frame_index_of(entry.path().filename().string())) indices.insert(*n);
    }
  }

  for (std::size_t n : indices) {
    const std::string stem = fmt::format("{:06}", n);
    FrameRecord r;
    r.index = n;
    r.depth = frames / (stem + ".depth.png");
    r.prediction = frames / (stem + ".pred.png");
    r.pose = frames / (stem + ".pose.txt");
    r.color = existing(frames / (stem + ".color.png"));
    r.ground_truth = existing(frames / (stem + ".gt.png"));
    r.instances = existing(frames / (stem + ".inst.png"));

    std::string problem;
    if (!fs::is_regular_file(r.depth)) problem = "no depth image";
    else if (!fs::is_regular_file(r.prediction)) problem = "no prediction";
    else if (!fs::is_regular_file(r.pose)) problem = "no pose";
    if (problem.empty()) problem = check_png(r.depth, 16, 1, seq.intrinsics);
    if (problem.empty()) problem = check_png(r.prediction, 8, 1, seq.intrinsics);
    if (problem.empty()) {
      try {
        (void)Pose::load(r.pose);
      } catch (const std::exception& e) {
        problem = e.what();
      }
    }
    if (!problem.empty()) {
      spdlog::warn("frame {}: {}; skipped", stem, problem);
      ++seq.dropped;
      continue;
    }
    seq.frames.push_back(std::move(r));
  }
  if (seq.frames.empty()) throw DataError(fmt::format("{}: no usable frames", dir.string()));
  return seq;
}

Frame load_frame(const Sequence& seq, const FrameRecord& record, const LabelSpace& space) {
  Frame f;
  f.index = record.index;
  try {
    f.depth = read_depth(record.depth);
    f.prediction = read_labels(record.prediction, LabelRole::kRawPrediction);
    f.pose = Pose::load(record.pose);
    if (record.color) f.rgb_path = record.color->string();
    if (record.ground_truth) f.ground_truth = read_labels(*record.ground_truth, LabelRole::kGroundTruth);
    if (record.instances) f.instances = read_png_u16(*record.instances);
    f.validate(seq.intrinsics, space);
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(fmt::format("frame {:06}: {}", record.index, e.what()));
  }
  return f;
}

}  // namespace pseudolabel
