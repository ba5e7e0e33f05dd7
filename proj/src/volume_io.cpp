#include "pseudolabel/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "pseudolabel/errors.hpp"

namespace pseudolabel {

namespace {

static_assert(std::endian::native == std::endian::little,
              "volume I/O assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    if (bytes_.size() - pos_ < sizeof(T))
      throw FormatError(fmt::format("truncated volume file while reading {}", what), pos_);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_volume(const SemanticVolume& volume) {
  Writer w;
  for (char c : kVolumeMagic) w.put<char>(c);
  w.put<std::uint32_t>(kVolumeVersion);
  w.put<double>(volume.voxel_size());
  w.put<double>(volume.truncation());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(volume.labels().num_classes));
  const auto keys = volume.sorted_block_indices();
  w.put<std::uint64_t>(keys.size());
  for (const auto& key : keys) {
    w.put<std::int32_t>(key.x);
    w.put<std::int32_t>(key.y);
    w.put<std::int32_t>(key.z);
    for (const SemanticVoxel& vox : volume.find_block(key)->voxels) {
      w.put<float>(vox.tsdf);
      w.put<float>(vox.weight);
      w.put<std::uint16_t>(static_cast<std::uint16_t>(vox.histogram.size()));
      for (const auto& e : vox.histogram) {
        w.put<std::uint8_t>(e.class_id);
        w.put<std::uint32_t>(e.count);
      }
    }
  }
  return w.take();
}

SemanticVolume deserialize_volume(const std::vector<std::uint8_t>& bytes,
                                  const VolumeConfig& defaults) {
  Reader r(bytes);
  for (char expected : kVolumeMagic) {
    const std::size_t at = r.pos();
    if (r.get<char>("magic") != expected) throw FormatError("bad volume magic", at);
  }
  {
    const std::size_t at = r.pos();
    const auto version = r.get<std::uint32_t>("version");
    if (version != kVolumeVersion)
      throw FormatError(fmt::format("unsupported volume version {}", version), at);
  }
  VolumeConfig cfg = defaults;
  const std::size_t header_at = r.pos();
  cfg.voxel_size = r.get<double>("voxel_size");
  cfg.truncation = r.get<double>("truncation");
  cfg.labels.num_classes = static_cast<int>(r.get<std::uint32_t>("num_classes"));
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(fmt::format("invalid volume header: {}", e.what()), header_at);
  }

  SemanticVolume volume(cfg);
  const auto block_count = r.get<std::uint64_t>("block count");
  for (std::uint64_t b = 0; b < block_count; ++b) {
    const std::size_t block_at = r.pos();
    BlockIndex key;
    key.x = r.get<std::int32_t>("block index");
    key.y = r.get<std::int32_t>("block index");
    key.z = r.get<std::int32_t>("block index");
    if (volume.find_block(key)) throw FormatError("duplicate block index", block_at);
    Block& block = volume.block_at(key);
    for (SemanticVoxel& vox : block.voxels) {
      vox.tsdf = r.get<float>("tsdf");
      vox.weight = r.get<float>("weight");
      const auto n = r.get<std::uint16_t>("histogram size");
      vox.histogram.reserve(n);
      for (std::uint16_t k = 0; k < n; ++k) {
        const std::size_t entry_at = r.pos();
        const auto cls = r.get<std::uint8_t>("class id");
        const auto count = r.get<std::uint32_t>("class count");
        if (!cfg.labels.is_valid(cls))
          throw FormatError(fmt::format("class id {} outside label space", cls), entry_at);
        if (!vox.histogram.empty() && vox.histogram.back().class_id >= cls)
          throw FormatError("histogram entries not strictly ascending", entry_at);
        vox.histogram.push_back({cls, count});
      }
    }
  }
  if (!r.at_end()) throw FormatError("trailing bytes after last block", r.pos());
  return volume;
}

void save_volume(const SemanticVolume& volume, const std::filesystem::path& path) {
  const auto bytes = serialize_volume(volume);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(fmt::format("write failed: {}", path.string()));
}

SemanticVolume load_volume(const std::filesystem::path& path, const VolumeConfig& defaults) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_volume(bytes, defaults);
}

}  // namespace pseudolabel
