#include "pseudolabel/synthetic_world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "pseudolabel/errors.hpp"
#include "pseudolabel/image_io.hpp"
#include "pseudolabel/toml_lite.hpp"

namespace pseudolabel {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (salt * 0x9E3779B97F4A7C15ull);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// mt19937_64 is specified bit-exactly; the std distributions are not, so
// uniforms are derived from raw draws.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

Box make_box(ClassId cls, std::uint16_t instance, Eigen::Vector3d lo, Eigen::Vector3d hi, bool shell) {
  return Box{cls, instance, lo, hi, shell};
}

Pose look_pose(const Point3& position, double yaw, double pitch) {
  const Eigen::Vector3d forward(std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch),
                                -std::sin(pitch));
  const Eigen::Vector3d right(std::sin(yaw), -std::cos(yaw), 0.0);
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return Pose(r, position);
}

std::optional<std::pair<double, std::size_t>> nearest_hit(const Scene& scene, const Point3& origin,
                                                          const Eigen::Vector3d& dir) {
  std::optional<std::pair<double, std::size_t>> best;
  for (std::size_t b = 0; b < scene.boxes.size(); ++b) {
    if (auto t = intersect_box(scene.boxes[b], origin, dir)) {
      if (!best || *t < best->first) best = std::make_pair(*t, b);
    }
  }
  return best;
}

template <typename T>
T require(const nlohmann::json& j, const char* key, const char* where) {
  if (!j.contains(key)) throw ConfigError(fmt::format("{}: missing '{}'", where, key));
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(fmt::format("{}: '{}' has the wrong type", where, key));
  }
}

template <typename T>
T optional_value(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(fmt::format("'{}' has the wrong type", key));
  }
}

Eigen::Vector3d vec3(const nlohmann::json& j, const char* key) {
  const auto v = require<std::vector<double>>(j, key, "[[box]]");
  if (v.size() != 3) throw ConfigError(fmt::format("[[box]]: '{}' must have three entries", key));
  return {v[0], v[1], v[2]};
}

}  // namespace

void Scene::validate(const LabelSpace& space) const {
  std::set<std::uint16_t> ids;
  for (const Box& b : boxes) {
    if (b.instance_id == 0) throw std::invalid_argument("instance id 0 is reserved for background");
    if (!ids.insert(b.instance_id).second)
      throw std::invalid_argument(fmt::format("duplicate instance id {}", b.instance_id));
    if (!(b.max.array() > b.min.array()).all())
      throw std::invalid_argument(fmt::format("box {} is degenerate", b.instance_id));
    if (!space.is_valid(b.class_id))
      throw std::invalid_argument(fmt::format("box {} has invalid class {}", b.instance_id, b.class_id));
  }
}

const Box* Scene::find_instance(std::uint16_t instance_id) const {
  for (const Box& b : boxes)
    if (b.instance_id == instance_id) return &b;
  return nullptr;
}

Scene default_room_scene() {
  const Eigen::Vector3d o(0.013, 0.021, 0.007);
  const double sx = 4.2, sy = 3.6, sz = 2.6, t = 0.2;
  Scene s;
  s.boxes = {
      make_box(kFloorClass, 1, o + Eigen::Vector3d(-t, -t, -t), o + Eigen::Vector3d(sx + t, sy + t, 0), true),
      make_box(kWallClass, 2, o + Eigen::Vector3d(-t, -t, 0), o + Eigen::Vector3d(0, sy + t, sz), true),
      make_box(kWallClass, 3, o + Eigen::Vector3d(sx, -t, 0), o + Eigen::Vector3d(sx + t, sy + t, sz), true),
      make_box(kWallClass, 4, o + Eigen::Vector3d(0, -t, 0), o + Eigen::Vector3d(sx, 0, sz), true),
      make_box(kWallClass, 5, o + Eigen::Vector3d(0, sy, 0), o + Eigen::Vector3d(sx, sy + t, sz), true),
      make_box(kCabinetClass, 6, o + Eigen::Vector3d(3.7, 1.2, 0), o + Eigen::Vector3d(sx, 2.2, 1.1), false),
      make_box(kTableClass, 7, o + Eigen::Vector3d(1.4, 1.0, 0), o + Eigen::Vector3d(2.4, 1.8, 0.75), false),
  };
  return s;
}

void NoiseModel::validate(const LabelSpace& space) const {
  if (!(flip_rate >= 0.0 && flip_rate <= 1.0)) throw std::invalid_argument("flip rate must be in [0, 1]");
  if (!(visibility_threshold >= 0.0 && visibility_threshold <= 1.0))
    throw std::invalid_argument("visibility threshold must be in [0, 1]");
  if (!space.is_valid(substitute_class)) throw std::invalid_argument("substitute class outside label space");
}

SceneSpec SceneSpec::load(const fs::path& path) {
  const nlohmann::json root = load_toml(path);
  SceneSpec spec;
  if (root.contains("labels"))
    spec.labels.num_classes = optional_value<int>(root["labels"], "num_classes", spec.labels.num_classes);
  if (root.contains("box")) {
    spec.scene.boxes.clear();
    for (const auto& jb : root["box"]) {
      Box b;
      b.class_id = static_cast<ClassId>(require<int>(jb, "class", "[[box]]"));
      b.instance_id = static_cast<std::uint16_t>(require<int>(jb, "instance", "[[box]]"));
      b.min = vec3(jb, "min");
      b.max = vec3(jb, "max");
      b.shell = optional_value<bool>(jb, "shell", false);
      spec.scene.boxes.push_back(b);
    }
  }
  spec.scene.seed = optional_value<std::uint64_t>(root, "seed", 0);
  if (root.contains("camera")) {
    const auto& c = root["camera"];
    spec.camera.fx = optional_value<double>(c, "fx", spec.camera.fx);
    spec.camera.fy = optional_value<double>(c, "fy", spec.camera.fy);
    spec.camera.cx = optional_value<double>(c, "cx", spec.camera.cx);
    spec.camera.cy = optional_value<double>(c, "cy", spec.camera.cy);
    spec.camera.width = optional_value<int>(c, "width", spec.camera.width);
    spec.camera.height = optional_value<int>(c, "height", spec.camera.height);
  }
  if (root.contains("noise")) {
    const auto& n = root["noise"];
    spec.noise.flip_rate = optional_value<double>(n, "p", 0.0);
    spec.noise.visibility_threshold = optional_value<double>(n, "tau", 0.0);
    spec.noise.substitute_class = static_cast<ClassId>(optional_value<int>(n, "substitute", kWallClass));
    spec.noise.seed = optional_value<std::uint64_t>(n, "seed", 0);
  }
  if (root.contains("trajectory")) {
    const auto& t = root["trajectory"];
    spec.trajectory.n_frames = optional_value<std::size_t>(t, "n_frames", spec.trajectory.n_frames);
    spec.trajectory.seed = optional_value<std::uint64_t>(t, "seed", 0);
  }
  try {
    spec.labels.validate();
    spec.camera.validate();
    spec.scene.validate(spec.labels);
    spec.noise.validate(spec.labels);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  if (spec.trajectory.n_frames == 0) throw ConfigError(fmt::format("{}: n_frames must be >= 1", path.string()));
  return spec;
}

std::optional<double> intersect_box(const Box& box, const Point3& origin, const Eigen::Vector3d& dir) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < box.min[a] || origin[a] > box.max[a]) return std::nullopt;
      continue;
    }
    double t1 = (box.min[a] - origin[a]) / dir[a];
    double t2 = (box.max[a] - origin[a]) / dir[a];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (t_far < t_near || !(t_near > 0.0)) return std::nullopt;
  return t_near;
}

OracleRender render_oracle(const Scene& scene, const Pose& pose, const CameraIntrinsics& intr,
                           Execution exec) {
  intr.validate();
  OracleRender out{DepthMap(intr.width, intr.height, 0.0f),
                   LabelMap(intr.width, intr.height, LabelRole::kGroundTruth, kIgnoreLabel),
                   InstanceMap(intr.width, intr.height, 0)};
  const Point3 origin = pose.translation();
  const auto render_row = [&](int v) {
    for (int u = 0; u < intr.width; ++u) {
      const Eigen::Vector3d dir = pose.rotation() * pixel_ray(u, v, intr);
      if (auto hit = nearest_hit(scene, origin, dir)) {
        const Box& box = scene.boxes[hit->second];
        out.depth.at(u, v) = static_cast<float>(hit->first);
        out.labels.at(u, v) = box.class_id;
        out.instances.at(u, v) = box.instance_id;
      }
    }
  };
  if (exec == Execution::kSerial) {
    for (int v = 0; v < intr.height; ++v) render_row(v);
  } else {
#pragma omp parallel for schedule(static)
    for (int v = 0; v < intr.height; ++v) render_row(v);
  }
  return out;
}

double march_depth_oracle(const Scene& scene, const Pose& pose, const CameraIntrinsics& intr, int u,
                          int v, double max_depth, double step) {
  const Point3 origin = pose.translation();
  const Eigen::Vector3d dir = pose.rotation() * pixel_ray(u, v, intr);
  const auto inside = [&](double t) {
    const Point3 p = origin + t * dir;
    return std::any_of(scene.boxes.begin(), scene.boxes.end(),
                       [&](const Box& b) { return b.contains(p); });
  };
  for (double t = step; t <= max_depth; t += step) {
    if (!inside(t)) continue;
    double lo = t - step;
    double hi = t;
    for (int k = 0; k < 100 && hi - lo > 1e-12; ++k) {
      const double mid = 0.5 * (lo + hi);
      (inside(mid) ? hi : lo) = mid;
    }
    return hi;
  }
  return 0.0;
}

VisibleAreas max_visible_areas(std::span<const InstanceMap> renders) {
  VisibleAreas best;
  for (const InstanceMap& r : renders) {
    std::map<std::uint16_t, std::size_t> counts;
    for (auto id : r.pixels())
      if (id) ++counts[id];
    for (const auto& [id, n] : counts) best[id] = std::max(best[id], n);
  }
  return best;
}

LabelMap corrupt_labels(const LabelMap& gt, const InstanceMap& instances, const VisibleAreas& max_areas,
                        const NoiseModel& noise, std::size_t frame_index, const LabelSpace& space) {
  noise.validate(space);
  if (!gt.same_shape(instances)) throw std::invalid_argument("gt and instance map dimensions differ");

  LabelMap out(static_cast<const Grid<ClassId>&>(gt), LabelRole::kRawPrediction);
  if (noise.visibility_threshold > 0.0) {
    std::map<std::uint16_t, std::size_t> visible;
    for (auto id : instances.pixels())
      if (id) ++visible[id];
    std::set<std::uint16_t> partial;
    for (const auto& [id, n] : visible) {
      auto it = max_areas.find(id);
      const double reference = it == max_areas.end() ? static_cast<double>(n) : static_cast<double>(it->second);
      if (static_cast<double>(n) < noise.visibility_threshold * reference) partial.insert(id);
    }
    for (std::size_t i = 0; i < out.size(); ++i)
      if (out[i] != kIgnoreLabel && partial.contains(instances[i])) out[i] = noise.substitute_class;
  }

  if (noise.flip_rate > 0.0 && space.num_classes > 1) {
    std::mt19937_64 rng(mix_seed(noise.seed, frame_index));
    const auto others = static_cast<std::uint64_t>(space.num_classes - 1);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i] == kIgnoreLabel) continue;
      const double draw = uniform01(rng);
      const std::uint64_t pick = rng() % others;
      if (draw < noise.flip_rate) out[i] = static_cast<ClassId>(pick >= out[i] ? pick + 1 : pick);
    }
  }
  return out;
}

std::vector<Pose> sample_trajectory(const Scene& scene, std::size_t n_frames, std::uint64_t seed) {
  if (n_frames == 0) throw std::invalid_argument("trajectory needs at least one frame");
  if (scene.boxes.empty()) throw std::invalid_argument("cannot plan a trajectory in an empty scene");

  Eigen::Vector3d lo = scene.boxes.front().min;
  Eigen::Vector3d hi = scene.boxes.front().max;
  std::vector<const Box*> objects;
  for (const Box& b : scene.boxes) {
    lo = lo.cwiseMin(b.min);
    hi = hi.cwiseMax(b.max);
    if (!b.shell) objects.push_back(&b);
  }
  const Eigen::Vector3d extent = hi - lo;
  const Eigen::Vector3d region_lo(lo.x() + 0.22 * extent.x(), lo.y() + 0.22 * extent.y(), lo.z() + 0.45 * extent.z());
  const Eigen::Vector3d region_hi(hi.x() - 0.22 * extent.x(), hi.y() - 0.22 * extent.y(), lo.z() + 0.70 * extent.z());

  std::mt19937_64 rng(mix_seed(seed, 0x7A3Cull));
  const auto clear_of_objects = [&](const Point3& p) {
    return std::none_of(objects.begin(), objects.end(), [&](const Box* b) {
      return ((p.array() >= b->min.array() - 0.3) && (p.array() <= b->max.array() + 0.3)).all();
    });
  };

  struct Key {
    Point3 position;
    double yaw;
    double pitch;
  };
  const std::size_t num_keys = n_frames == 1 ? 1 : std::max<std::size_t>(2, (n_frames + 11) / 12);
  std::vector<Key> keys;
  for (std::size_t k = 0; k < num_keys; ++k) {
    Point3 pos;
    int attempts = 0;
    do {
      pos = {uniform(rng, region_lo.x(), region_hi.x()), uniform(rng, region_lo.y(), region_hi.y()),
             uniform(rng, region_lo.z(), region_hi.z())};
    } while (!clear_of_objects(pos) && ++attempts < 1000);

    Point3 target = 0.5 * (lo + hi);
    if (!objects.empty()) {
      const Box* b = objects[static_cast<std::size_t>(rng() % objects.size())];
      target = b->center() + Eigen::Vector3d(uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3), 0.0);
    }
    const Eigen::Vector3d f = (target - pos).normalized();
    keys.push_back({pos, std::atan2(f.y(), f.x()), std::asin(std::clamp(-f.z(), -1.0, 1.0))});
  }

  std::vector<Pose> poses;
  poses.reserve(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    if (num_keys == 1) {
      poses.push_back(look_pose(keys[0].position, keys[0].yaw, keys[0].pitch));
      continue;
    }
    const double s = static_cast<double>(i) * static_cast<double>(num_keys - 1) / static_cast<double>(n_frames - 1);
    const std::size_t k = std::min(static_cast<std::size_t>(s), num_keys - 2);
    const double f = s - static_cast<double>(k);
    const Key& a = keys[k];
    const Key& b = keys[k + 1];
    double dyaw = b.yaw - a.yaw;
    while (dyaw > std::numbers::pi) dyaw -= 2.0 * std::numbers::pi;
    while (dyaw < -std::numbers::pi) dyaw += 2.0 * std::numbers::pi;
    poses.push_back(look_pose((1.0 - f) * a.position + f * b.position, a.yaw + f * dyaw,
                              (1.0 - f) * a.pitch + f * b.pitch));
  }
  return poses;
}

SyntheticSequence synthesize(const SceneSpec& spec, Execution exec) {
  spec.labels.validate();
  spec.camera.validate();
  spec.scene.validate(spec.labels);
  spec.noise.validate(spec.labels);

  const auto poses = sample_trajectory(spec.scene, spec.trajectory.n_frames, spec.trajectory.seed);
  std::vector<OracleRender> renders;
  renders.reserve(poses.size());
  for (const Pose& pose : poses) renders.push_back(render_oracle(spec.scene, pose, spec.camera, exec));

  std::vector<InstanceMap> instance_maps;
  instance_maps.reserve(renders.size());
  for (const auto& r : renders) instance_maps.push_back(r.instances);
  const VisibleAreas max_areas = max_visible_areas(instance_maps);

  SyntheticSequence seq;
  seq.intrinsics = spec.camera;
  seq.frames.reserve(poses.size());
  for (std::size_t n = 0; n < poses.size(); ++n) {
    OracleRender& r = renders[n];
    Frame f;
    f.index = n;
    f.pose = poses[n];
    f.depth = DepthMap(r.depth.width(), r.depth.height(), 0.0f);
    for (std::size_t i = 0; i < r.depth.size(); ++i) f.depth[i] = depth_from_mm(depth_to_mm(r.depth[i]));
    f.prediction = corrupt_labels(r.labels, r.instances, max_areas, spec.noise, n, spec.labels);
    f.ground_truth = std::move(r.labels);
    f.instances = std::move(r.instances);
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

std::array<std::uint8_t, 3> instance_color(std::uint16_t instance_id) {
  if (instance_id == 0) return {0, 0, 0};
  const std::uint64_t h = mix_seed(0xC0105ull, instance_id);
  return {static_cast<std::uint8_t>(64 + (h & 0x7F)), static_cast<std::uint8_t>(64 + ((h >> 8) & 0x7F)),
          static_cast<std::uint8_t>(64 + ((h >> 16) & 0x7F))};
}

void export_scene(const SyntheticSequence& sequence, const fs::path& out_dir) {
  if (sequence.frames.empty()) throw std::invalid_argument("refusing to export an empty trajectory");
  const fs::path frames = out_dir / "frames";
  std::error_code ec;
  fs::create_directories(frames, ec);
  if (ec) throw DataError(fmt::format("cannot create {}: {}", frames.string(), ec.message()));

  sequence.intrinsics.save(out_dir / "intrinsics.txt");
  for (const Frame& f : sequence.frames) {
    const std::string stem = fmt::format("{:06}", f.index);
    write_depth(frames / (stem + ".depth.png"), f.depth);
    write_labels(frames / (stem + ".pred.png"), f.prediction);
    f.pose.save(frames / (stem + ".pose.txt"));
    if (f.ground_truth) write_labels(frames / (stem + ".gt.png"), *f.ground_truth);
    if (f.instances) {
      write_png_u16(frames / (stem + ".inst.png"), *f.instances);
      Grid<std::array<std::uint8_t, 3>> rgb(f.instances->width(), f.instances->height());
      for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = instance_color((*f.instances)[i]);
      write_png_rgb(frames / (stem + ".color.png"), rgb);
    }
  }
}

std::optional<RayHit> march_volume_oracle(const SemanticVolume& volume, const Point3& origin,
                                          const Eigen::Vector3d& direction, double max_range,
                                          double step) {
  struct Sample {
    VoxelIndex voxel;
    const SemanticVoxel* data;
    double t;
  };
  std::optional<Sample> prev;
  std::optional<VoxelIndex> last;
  const auto steps = static_cast<long>(std::floor(max_range / step));
  for (long k = 0; k <= steps; ++k) {
    const Point3 p = origin + (static_cast<double>(k) * step) * direction;
    const VoxelIndex vi = volume.voxel_index(p);
    if (last && *last == vi) continue;
    last = vi;
    const SemanticVoxel* vox = volume.find_voxel(vi);
    if (!vox || !vox->observed()) {
      prev.reset();
      continue;
    }
    const Sample cur{vi, vox, (volume.center(vi) - origin).dot(direction)};
    if (prev && prev->data->tsdf > 0.0f && vox->tsdf <= 0.0f) {
      const double s0 = prev->data->tsdf;
      const double s1 = vox->tsdf;
      const double t_hit = locate_crossing(volume, origin, direction, prev->t, s0, cur.t, s1);
      const Sample* labelled = std::abs(s0) <= std::abs(s1) ? &*prev : &cur;
      const Sample* other = labelled == &cur ? &*prev : &cur;
      if (labelled->data->histogram.empty() && !other->data->histogram.empty()) labelled = other;
      RayHit hit;
      hit.distance = t_hit;
      hit.position = origin + t_hit * direction;
      hit.voxel = labelled->voxel;
      hit.class_id = labelled->data->argmax().value_or(kIgnoreLabel);
      return hit;
    }
    prev = cur;
  }
  return std::nullopt;
}

MaskResponse oracle_masks(const Scene& scene, const Pose& pose, const CameraIntrinsics& intr,
                          const MaskRequest& request, const OraclePerturbation& perturbation) {
  return oracle_masks(render_oracle(scene, pose, intr).instances, request, perturbation);
}

}  // namespace pseudolabel
