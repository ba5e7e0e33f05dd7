#include "pseudolabel/semantic_volume.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>

namespace pseudolabel {

void Frame::validate(const CameraIntrinsics& intr, const LabelSpace& space) const {
  if (!depth.same_shape(intr.width, intr.height))
    throw std::invalid_argument(fmt::format("frame {}: depth is {}x{}, intrinsics {}x{}", index,
                                            depth.width(), depth.height(), intr.width,
                                            intr.height));
  if (!prediction.same_shape(intr.width, intr.height))
    throw std::invalid_argument(fmt::format("frame {}: prediction is {}x{}, intrinsics {}x{}",
                                            index, prediction.width(), prediction.height(),
                                            intr.width, intr.height));
  prediction.validate(space);
  if (ground_truth && !ground_truth->same_shape(intr.width, intr.height))
    throw std::invalid_argument(fmt::format("frame {}: ground truth dimension mismatch", index));
  if (instances && !instances->same_shape(intr.width, intr.height))
    throw std::invalid_argument(fmt::format("frame {}: instance map dimension mismatch", index));
}

std::uint32_t SemanticVoxel::count(ClassId c) const {
  auto it = std::lower_bound(histogram.begin(), histogram.end(), c,
                             [](const ClassCount& e, ClassId id) { return e.class_id < id; });
  return (it != histogram.end() && it->class_id == c) ? it->count : 0u;
}

std::uint64_t SemanticVoxel::total_count() const {
  std::uint64_t total = 0;
  for (const auto& e : histogram) total += e.count;
  return total;
}

std::optional<ClassId> SemanticVoxel::argmax() const {
  std::optional<ClassId> best;
  std::uint32_t best_count = 0;
  // Ascending class order, so strict > keeps the lowest id on ties.
  for (const auto& e : histogram) {
    if (e.count > best_count) {
      best_count = e.count;
      best = e.class_id;
    }
  }
  return best;
}

void tsdf_update(SemanticVoxel& voxel, double sdf_sample, double w, double truncation,
                 double max_weight) {
  const double sdf = std::clamp(sdf_sample, -truncation, truncation);
  const double weight = voxel.weight;
  const double new_tsdf = (voxel.tsdf * weight + sdf * w) / (weight + w);
  voxel.tsdf = static_cast<float>(std::clamp(new_tsdf, -truncation, truncation));
  voxel.weight = static_cast<float>(std::min(weight + w, max_weight));
}

void semantic_update(SemanticVoxel& voxel, ClassId class_id, const LabelSpace& space) {
  if (!space.is_valid(class_id))
    throw std::invalid_argument(fmt::format("class {} is not a valid label", class_id));
  auto it = std::lower_bound(voxel.histogram.begin(), voxel.histogram.end(), class_id,
                             [](const ClassCount& e, ClassId id) { return e.class_id < id; });
  if (it != voxel.histogram.end() && it->class_id == class_id)
    ++it->count;
  else
    voxel.histogram.insert(it, ClassCount{class_id, 1u});
}

bool Block::any_observed() const {
  return std::any_of(voxels.begin(), voxels.end(),
                     [](const SemanticVoxel& v) { return v.observed(); });
}

VolumeConfig VolumeConfig::for_voxel_size(double voxel_size, double truncation_factor) {
  VolumeConfig c;
  c.voxel_size = voxel_size;
  c.truncation = truncation_factor * voxel_size;
  return c;
}

void VolumeConfig::validate() const {
  if (!(voxel_size > 0.0)) throw std::invalid_argument("voxel_size must be positive");
  if (!(truncation >= voxel_size)) throw std::invalid_argument("truncation must be >= voxel_size");
  if (!(max_weight > 0.0)) throw std::invalid_argument("max_weight must be positive");
  if (!(observation_weight > 0.0))
    throw std::invalid_argument("observation_weight must be positive");
  if (!(max_range > 0.0)) throw std::invalid_argument("max_range must be positive");
  labels.validate();
}

SemanticVolume::SemanticVolume(VolumeConfig config) : config_(config) { config_.validate(); }

const Block* SemanticVolume::find_block(const BlockIndex& b) const {
  auto it = blocks_.find(b);
  return it == blocks_.end() ? nullptr : it->second.get();
}

Block& SemanticVolume::block_at(const BlockIndex& b) {
  auto& slot = blocks_[b];
  if (!slot) slot = std::make_unique<Block>();
  return *slot;
}

const SemanticVoxel* SemanticVolume::find_voxel(const VoxelIndex& v) const {
  const Block* block = find_block(block_of(v));
  return block ? &block->voxels[local_offset(v)] : nullptr;
}

SemanticVoxel& SemanticVolume::voxel_at(const VoxelIndex& v) {
  return block_at(block_of(v)).voxels[local_offset(v)];
}

std::vector<BlockIndex> SemanticVolume::sorted_block_indices() const {
  std::vector<BlockIndex> keys;
  keys.reserve(blocks_.size());
  for (const auto& [key, block] : blocks_) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::size_t SemanticVolume::prune() {
  return std::erase_if(blocks_, [](const auto& kv) { return !kv.second->any_observed(); });
}

bool SemanticVolume::operator==(const SemanticVolume& other) const {
  if (config_.voxel_size != other.config_.voxel_size ||
      config_.truncation != other.config_.truncation ||
      config_.labels.num_classes != other.config_.labels.num_classes ||
      blocks_.size() != other.blocks_.size())
    return false;
  for (const auto& [key, block] : blocks_) {
    const Block* rhs = other.find_block(key);
    if (!rhs || !(*block == *rhs)) return false;
  }
  return true;
}

}  // namespace pseudolabel
