#include "pseudolabel/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <memory>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "pseudolabel/errors.hpp"
#include "pseudolabel/exchange.hpp"
#include "pseudolabel/image_io.hpp"
#include "pseudolabel/parallel.hpp"
#include "pseudolabel/toml_lite.hpp"
#include "pseudolabel/volume_io.hpp"

namespace pseudolabel {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
}

template <typename T>
T get(const json& table, const char* key, T fallback) {
  if (!table.contains(key)) return fallback;
  try {
    return table.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("config key '{}' has the wrong type", key));
  }
}

const json& section(const json& root, const char* name) {
  static const json empty = json::object();
  if (!root.contains(name)) return empty;
  if (!root.at(name).is_object()) throw ConfigError(fmt::format("config section [{}] is not a table", name));
  return root.at(name);
}

/// Runs `body(i)` for i in [0, n) across OpenMP workers, rethrowing the first failure.
void for_each_frame(std::size_t n, const std::function<void(std::size_t)>& body) {
  ExceptionSlot slot;
  const auto count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < count; ++i) slot.run([&] { body(static_cast<std::size_t>(i)); });
  slot.rethrow();
}

std::unique_ptr<Segmenter> make_segmenter(const Sequence& seq, const PipelineConfig& config,
                                          const fs::path& exchange) {
  if (config.segmenter == SegmenterKind::kExchange) {
    const auto timeout = std::chrono::milliseconds(static_cast<long long>(config.exchange_timeout_s * 1000.0));
    return std::make_unique<ExchangeSegmenter>(exchange, timeout);
  }
  const Sequence* s = &seq;
  return std::make_unique<OracleSegmenter>(
      [s](std::size_t frame) {
        const FrameRecord* r = s->find(frame);
        if (!r || !r->instances)
          throw DataError(fmt::format("frame {:06}: the oracle segmenter needs an instance image", frame));
        return read_png_u16(*r->instances);
      },
      config.perturbation);
}

ConfusionMatrix evaluate_with(std::span<const FrameRecord> frames, const LabelSpace& space,
                              const std::function<LabelMap(const FrameRecord&)>& pred,
                              const std::function<LabelMap(const FrameRecord&)>& gt) {
  ConfusionMatrix total(space.num_classes);
  ExceptionSlot slot;
  const auto count = static_cast<long>(frames.size());
#pragma omp parallel
  {
    ConfusionMatrix local(space.num_classes);
#pragma omp for schedule(dynamic)
    for (long i = 0; i < count; ++i) {
      slot.run([&] {
        const FrameRecord& r = frames[static_cast<std::size_t>(i)];
        LabelMap p = pred(r);
        LabelMap g = gt(r);
        if (!p.same_shape(g))
          throw DataError(fmt::format("frame {:06}: prediction and ground truth sizes differ", r.index));
        try {
          local.accumulate(p, g, Execution::kSerial);
        } catch (const std::invalid_argument& e) {
          throw DataError(fmt::format("frame {:06}: {}", r.index, e.what()));
        }
      });
    }
#pragma omp critical
    total.merge(local);
  }
  slot.rethrow();
  return total;
}

LabelMap read_label_image(const fs::path& path, LabelRole role) {
  if (!fs::is_regular_file(path)) throw DataError(fmt::format("missing {}", path.string()));
  return read_labels(path, role);
}

}  // namespace

std::vector<PromptStrategy> parse_strategies(std::string_view s) {
  if (s == "both") return {PromptStrategy::kGrid, PromptStrategy::kInformed};
  try {
    return {parse_strategy(s)};
  } catch (const std::invalid_argument&) {
    throw ConfigError(fmt::format("unknown strategy '{}' (grid, informed or both)", s));
  }
}

void PipelineConfig::validate() const {
  try {
    if (voxel_sizes.empty()) throw std::invalid_argument("no voxel size configured");
    for (double vs : voxel_sizes) volume_config(vs).validate();
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
      throw std::invalid_argument("train_fraction must be in (0, 1]");
    labels.validate();
    refinement.validate();
    perturbation.validate();
    if (strategies.empty()) throw std::invalid_argument("no refinement strategy configured");
    if (!(exchange_timeout_s > 0.0)) throw std::invalid_argument("exchange timeout must be positive");
    if (workers < 0) throw std::invalid_argument("workers must be >= 0");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

VolumeConfig PipelineConfig::volume_config(double voxel_size) const {
  VolumeConfig vc = VolumeConfig::for_voxel_size(voxel_size, truncation_factor);
  vc.max_range = max_range;
  vc.labels = labels;
  return vc;
}

fs::path PipelineConfig::output_dir(double voxel_size) const {
  if (voxel_sizes.size() == 1) return out;
  return out / fmt::format("voxel_{}mm", static_cast<long>(std::lround(voxel_size * 1000.0)));
}

PipelineConfig PipelineConfig::from_json(const json& root) {
  PipelineConfig c;
  c.scene = get<std::string>(root, "scene", "");
  c.out = get<std::string>(root, "out", "");
  c.seed = get<std::uint64_t>(root, "seed", c.seed);
  c.workers = get<int>(root, "workers", c.workers);
  c.train_fraction = get<double>(root, "train_fraction", c.train_fraction);

  const json& volume = section(root, "volume");
  if (volume.contains("voxel_size")) {
    const json& v = volume["voxel_size"];
    c.voxel_sizes = v.is_array() ? get<std::vector<double>>(volume, "voxel_size", {})
                                 : std::vector<double>{get<double>(volume, "voxel_size", 0.05)};
  }
  c.truncation_factor = get<double>(volume, "truncation_factor", c.truncation_factor);
  c.max_range = get<double>(volume, "max_range", c.max_range);

  c.labels.num_classes = get<int>(section(root, "labels"), "num_classes", c.labels.num_classes);

  const json& refine = section(root, "refinement");
  if (refine.contains("strategy")) c.strategies = parse_strategies(get<std::string>(refine, "strategy", ""));
  c.refinement.grid_spacing = get<int>(refine, "d", c.refinement.grid_spacing);
  c.refinement.min_area_pct = get<double>(refine, "min_area_pct", c.refinement.min_area_pct);
  const int conn = get<int>(refine, "connectivity", 8);
  if (conn != 4 && conn != 8) throw ConfigError("connectivity must be 4 or 8");
  c.refinement.connectivity = conn == 4 ? Connectivity::kFour : Connectivity::kEight;

  const json& seg = section(root, "segmenter");
  const std::string kind = get<std::string>(seg, "kind", "oracle");
  if (kind == "oracle") c.segmenter = SegmenterKind::kOracle;
  else if (kind == "exchange") c.segmenter = SegmenterKind::kExchange;
  else throw ConfigError(fmt::format("unknown segmenter '{}'", kind));
  c.exchange_timeout_s = get<double>(seg, "timeout_s", c.exchange_timeout_s);
  c.perturbation.dilate_radius = get<int>(seg, "dilate", 0);
  c.perturbation.erode_radius = get<int>(seg, "erode", 0);
  c.perturbation.dropout = get<double>(seg, "dropout", 0.0);
  c.perturbation.seed = c.seed;
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& toml_path) {
  try {
    return from_json(load_toml(toml_path));
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", toml_path.string(), e.what()));
  }
}

IntegrationStats run_integrate(const Sequence& seq, const PipelineConfig& config, double voxel_size,
                               const fs::path& dir) {
  ensure_dir(dir);
  SemanticVolume volume(config.volume_config(voxel_size));
  IntegrationStats stats;
  const auto train = seq.train_frames();
  for (const FrameRecord& r : train) {
    const Frame f = load_frame(seq, r, config.labels);
    stats += integrate_frame(volume, f, seq.intrinsics);
  }
  save_volume(volume, dir / "volume.svol");

  ordered_json j;
  j["voxel_size"] = voxel_size;
  j["truncation"] = volume.truncation();
  j["frames"] = train.size();
  j["points_integrated"] = stats.points_integrated;
  j["labels_integrated"] = stats.labels_integrated;
  j["voxels_touched"] = stats.voxels_touched;
  j["blocks"] = volume.num_blocks();
  write_text(dir / "volume.stats.json", j.dump(2) + "\n");
  spdlog::info("integrated {} frames into {} blocks at {} m", train.size(), volume.num_blocks(), voxel_size);
  return stats;
}

void run_render(const Sequence& seq, const PipelineConfig& config, double voxel_size, const fs::path& dir) {
  const fs::path volume_path = dir / "volume.svol";
  if (!fs::is_regular_file(volume_path)) throw DataError(fmt::format("missing {}", volume_path.string()));
  const SemanticVolume volume = load_volume(volume_path, config.volume_config(voxel_size));
  const fs::path out = dir / "labels_mc";
  ensure_dir(out);
  const auto train = seq.train_frames();
  for_each_frame(train.size(), [&](std::size_t i) {
    const FrameRecord& r = train[i];
    const Pose pose = Pose::load(r.pose);
    const LabelMap y_mc = render_labels(volume, pose, seq.intrinsics, config.max_range, Execution::kSerial);
    write_labels(label_file(out, r.index), y_mc);
  });
}

fs::path exchange_dir(const fs::path& dir, PromptStrategy strategy) {
  return dir / fmt::format("exchange_{}", to_string(strategy));
}

fs::path refined_dir(const fs::path& dir, PromptStrategy strategy) {
  return dir / fmt::format("labels_ir_{}", to_string(strategy));
}

MaskRequest build_request(const Sequence& seq, const FrameRecord& record, const LabelMap& y_mc,
                          const RefinementConfig& refinement, const fs::path& exchange) {
  MaskRequest req;
  req.frame = record.index;
  req.width = y_mc.width();
  req.height = y_mc.height();
  if (record.color) req.image = fs::relative(*record.color, exchange).generic_string();
  req.prompts = refinement.strategy == PromptStrategy::kGrid
                    ? grid_prompts(req.width, req.height, refinement.grid_spacing)
                    : informed_prompts(y_mc, refinement.min_area_pct, refinement.connectivity);
  (void)seq;
  return req;
}

std::size_t run_prompts(const Sequence& seq, const PipelineConfig& config, PromptStrategy strategy,
                        const fs::path& dir) {
  const fs::path exchange = exchange_dir(dir, strategy);
  ensure_dir(exchange);
  RefinementConfig rc = config.refinement;
  rc.strategy = strategy;
  const auto train = seq.train_frames();
  std::size_t written = 0;
  for (const FrameRecord& r : train) {
    const LabelMap y_mc = read_label_image(label_file(dir / "labels_mc", r.index), LabelRole::kMultiview);
    const MaskRequest req = build_request(seq, r, y_mc, rc, exchange);
    if (req.prompts.empty()) continue;
    write_request(exchange, req);
    ++written;
  }
  return written;
}

RefinementStats run_refine(const Sequence& seq, const PipelineConfig& config, PromptStrategy strategy,
                           const fs::path& dir) {
  const fs::path exchange = exchange_dir(dir, strategy);
  const fs::path out = refined_dir(dir, strategy);
  ensure_dir(exchange);
  ensure_dir(out);
  RefinementConfig rc = config.refinement;
  rc.strategy = strategy;
  auto segmenter = make_segmenter(seq, config, exchange);
  const bool record_exchange = config.segmenter == SegmenterKind::kOracle;

  const auto train = seq.train_frames();
  std::vector<RefinementStats> per_frame(train.size());
  for_each_frame(train.size(), [&](std::size_t i) {
    const FrameRecord& r = train[i];
    const LabelMap y_mc = read_label_image(label_file(dir / "labels_mc", r.index), LabelRole::kMultiview);
    const MaskRequest req = build_request(seq, r, y_mc, rc, exchange);
    std::vector<InstanceMask> masks;
    if (!req.prompts.empty()) {
      const MaskResponse response = request_masks(*segmenter, req);
      if (record_exchange) {
        write_request(exchange, req);
        write_response(exchange, response);
      }
      masks = response.masks;
    }
    const LabelMap y_ir = refine_frame(y_mc, masks, strategy, &per_frame[i]);
    write_labels(label_file(out, r.index), y_ir);
  });

  RefinementStats total;
  for (const auto& s : per_frame) {
    total.masks_applied += s.masks_applied;
    total.masks_skipped += s.masks_skipped;
    total.pixels_overridden += s.pixels_overridden;
    total.overlap_pixels += s.overlap_pixels;
  }
  ordered_json j;
  j["strategy"] = to_string(strategy);
  j["segmenter"] = segmenter->name();
  j["frames"] = train.size();
  j["masks_applied"] = total.masks_applied;
  j["masks_skipped"] = total.masks_skipped;
  j["pixels_overridden"] = total.pixels_overridden;
  j["overlap_pixels"] = total.overlap_pixels;
  write_text(dir / fmt::format("refine_{}.stats.json", to_string(strategy)), j.dump(2) + "\n");
  return total;
}

ConfusionMatrix evaluate_directory(const Sequence& seq, std::span<const FrameRecord> frames,
                                   const fs::path& pred_dir, const LabelSpace& space) {
  (void)seq;
  return evaluate_with(
      frames, space,
      [&](const FrameRecord& r) { return read_label_image(label_file(pred_dir, r.index), LabelRole::kRefined); },
      [&](const FrameRecord& r) {
        if (!r.ground_truth) throw DataError(fmt::format("frame {:06} has no ground truth", r.index));
        return read_labels(*r.ground_truth, LabelRole::kGroundTruth);
      });
}

ConfusionMatrix evaluate_directories(std::span<const FrameRecord> frames, const fs::path& pred_dir,
                                     const fs::path& gt_dir, const LabelSpace& space) {
  return evaluate_with(
      frames, space,
      [&](const FrameRecord& r) { return read_label_image(label_file(pred_dir, r.index), LabelRole::kRefined); },
      [&](const FrameRecord& r) {
        return read_label_image(label_file(gt_dir, r.index), LabelRole::kGroundTruth);
      });
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  if (s == "all") return Split::kAll;
  throw ConfigError(fmt::format("unknown split '{}' (train, test or all)", s));
}

std::span<const FrameRecord> select(const Sequence& seq, Split split) {
  switch (split) {
    case Split::kTrain: return seq.train_frames();
    case Split::kTest: return seq.test_frames();
    case Split::kAll: break;
  }
  return seq.frames;
}

std::map<std::string, double> run_eval(const Sequence& seq, const PipelineConfig& config, Split split,
                                       const fs::path& dir) {
  const auto frames = select(seq, split);
  if (frames.empty()) throw DataError("the selected split has no frames");
  const std::string split_name = split == Split::kTrain ? "train" : split == Split::kTest ? "test" : "all";
  const fs::path reports = dir / "eval";
  ensure_dir(reports);

  std::map<std::string, double> result;
  const auto report = [&](const std::string& stem, const ConfusionMatrix& cm) {
    write_report(cm, reports, fmt::format("{}_{}", stem, split_name),
                 fmt::format("{} ({} split, {} frames)", stem, split_name, frames.size()));
    try {
      result[stem] = cm.miou();
    } catch (const UndefinedResultError&) {
      spdlog::warn("{}: mIoU undefined (no labeled pixels)", stem);
    }
  };

  report("raw", evaluate_with(
                    frames, config.labels,
                    [](const FrameRecord& r) { return read_labels(r.prediction, LabelRole::kRawPrediction); },
                    [](const FrameRecord& r) {
                      if (!r.ground_truth) throw DataError(fmt::format("frame {:06} has no ground truth", r.index));
                      return read_labels(*r.ground_truth, LabelRole::kGroundTruth);
                    }));

  std::vector<std::pair<std::string, fs::path>> dirs{{"mc", dir / "labels_mc"}};
  for (PromptStrategy s : {PromptStrategy::kGrid, PromptStrategy::kInformed})
    dirs.emplace_back(fmt::format("ir_{}", to_string(s)), refined_dir(dir, s));
  for (const auto& [stem, pred_dir] : dirs) {
    if (!fs::is_directory(pred_dir)) continue;
    const bool complete = std::all_of(frames.begin(), frames.end(), [&](const FrameRecord& r) {
      return fs::is_regular_file(label_file(pred_dir, r.index));
    });
    if (!complete) {
      spdlog::info("{}: no labels for every frame of the {} split; not evaluated", stem, split_name);
      continue;
    }
    report(stem, evaluate_directory(seq, frames, pred_dir, config.labels));
  }
  return result;
}

TrainingManifest build_manifest(const Sequence& seq, const std::vector<PromptStrategy>& strategies,
                                const fs::path& dir) {
  if (strategies.empty()) throw std::invalid_argument("manifest needs at least one strategy");
  TrainingManifest m;
  for (PromptStrategy s : strategies) m.tag += s == PromptStrategy::kGrid ? "G" : "I";
  if (strategies.size() > 1)
    m.note = "each image appears once per strategy; halve the epoch count to keep the number of "
             "optimizer steps comparable with single-strategy training";
  for (const FrameRecord& r : seq.train_frames()) {
    if (!r.color) throw DataError(fmt::format("frame {:06} has no color image", r.index));
    for (PromptStrategy s : strategies) {
      const fs::path label = label_file(refined_dir(dir, s), r.index);
      if (!fs::is_regular_file(label)) throw DataError(fmt::format("missing {}", label.string()));
      m.records.push_back({fs::absolute(*r.color).lexically_normal(), fs::absolute(label).lexically_normal(),
                           s == PromptStrategy::kGrid ? "G" : "I"});
    }
  }
  return m;
}

fs::path emit_manifest(const Sequence& seq, const std::vector<PromptStrategy>& strategies, const fs::path& dir) {
  const TrainingManifest m = build_manifest(seq, strategies, dir);
  ordered_json j;
  j["tag"] = m.tag;
  j["note"] = m.note;
  j["records"] = ordered_json::array();
  for (const auto& r : m.records)
    j["records"].push_back({{"image", r.image.string()}, {"label", r.label.string()}, {"strategy", r.strategy}});
  const fs::path path = dir / fmt::format("manifest_{}.json", m.tag);
  write_text(path, j.dump(2) + "\n");
  return path;
}

void run_pipeline(const PipelineConfig& config) {
  config.validate();
  if (config.scene.empty()) throw ConfigError("no scene directory given");
  if (config.out.empty()) throw ConfigError("no output directory given");
  set_worker_count(config.workers);
  const Sequence seq = ingest_scene(config.scene, config.train_fraction);
  spdlog::info("{}: {} frames ({} train, {} dropped)", seq.root.string(), seq.frames.size(), seq.train_count(),
               seq.dropped);
  for (double vs : config.voxel_sizes) {
    const fs::path dir = config.output_dir(vs);
    run_integrate(seq, config, vs, dir);
    run_render(seq, config, vs, dir);
    for (PromptStrategy s : config.strategies) run_refine(seq, config, s, dir);
    const auto scores = run_eval(seq, config, Split::kTrain, dir);
    for (const auto& [stem, miou] : scores) spdlog::info("{} m {}: mIoU {:.4f}", vs, stem, miou);
    const bool has_color = std::all_of(seq.frames.begin(), seq.frames.end(),
                                       [](const FrameRecord& r) { return r.color.has_value(); });
    if (!has_color) {
      spdlog::warn("no color images; training manifests skipped");
      continue;
    }
    for (PromptStrategy s : config.strategies) emit_manifest(seq, {s}, dir);
    if (config.strategies.size() > 1) emit_manifest(seq, config.strategies, dir);
  }
}

}  // namespace pseudolabel
