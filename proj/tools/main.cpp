#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "pseudolabel/dataset.hpp"
#include "pseudolabel/errors.hpp"
#include "pseudolabel/parallel.hpp"
#include "pseudolabel/pipeline.hpp"
#include "pseudolabel/synthetic_world.hpp"

namespace fs = std::filesystem;
using namespace pseudolabel;

namespace {

struct Flags {
  std::string config;
  std::string scene;
  std::string out;
  std::vector<double> voxel_sizes;
  std::string strategy;
  std::optional<int> d;
  std::optional<double> min_area_pct;
  std::string segmenter;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;

  // synth
  std::optional<std::size_t> frames;
  std::optional<double> flip_rate;
  std::optional<double> tau;

  // eval
  std::string split = "train";
  std::string pred_dir;
  std::string gt_dir;
};

PipelineConfig resolve(const Flags& f) {
  PipelineConfig c = f.config.empty() ? PipelineConfig{} : PipelineConfig::load(f.config);
  if (!f.scene.empty()) c.scene = f.scene;
  if (!f.out.empty()) c.out = f.out;
  if (!f.voxel_sizes.empty()) c.voxel_sizes = f.voxel_sizes;
  if (!f.strategy.empty()) c.strategies = parse_strategies(f.strategy);
  if (f.d) c.refinement.grid_spacing = *f.d;
  if (f.min_area_pct) c.refinement.min_area_pct = *f.min_area_pct;
  if (f.segmenter == "oracle") c.segmenter = SegmenterKind::kOracle;
  else if (f.segmenter == "exchange") c.segmenter = SegmenterKind::kExchange;
  else if (!f.segmenter.empty()) throw ConfigError(fmt::format("unknown segmenter '{}'", f.segmenter));
  if (f.seed) c.seed = c.perturbation.seed = *f.seed;
  if (f.workers) c.workers = *f.workers;
  c.validate();
  set_worker_count(c.workers);
  return c;
}

void require_paths(const PipelineConfig& c) {
  if (c.scene.empty()) throw ConfigError("--scene is required");
  if (c.out.empty()) throw ConfigError("--out is required");
}

int synth(const Flags& f) {
  SceneSpec spec = f.config.empty() ? SceneSpec{} : SceneSpec::load(f.config);
  if (f.seed) spec.trajectory.seed = spec.noise.seed = *f.seed;
  if (f.frames) spec.trajectory.n_frames = *f.frames;
  if (f.flip_rate) spec.noise.flip_rate = *f.flip_rate;
  if (f.tau) spec.noise.visibility_threshold = *f.tau;
  const std::string out = !f.out.empty() ? f.out : f.scene;
  if (out.empty()) throw ConfigError("synth needs --out (or --scene) for the dataset directory");
  try {
    spec.noise.validate(spec.labels);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (f.workers) set_worker_count(*f.workers);
  const SyntheticSequence seq = synthesize(spec);
  export_scene(seq, out);
  fmt::print("wrote {} frames to {}\n", seq.frames.size(), out);
  return 0;
}

int ingest_check(const Flags& f) {
  const PipelineConfig c = resolve(f);
  if (c.scene.empty()) throw ConfigError("--scene is required");
  const Sequence seq = ingest_scene(c.scene, c.train_fraction);
  std::size_t with_gt = 0, with_inst = 0, with_color = 0;
  for (const auto& r : seq.frames) {
    with_gt += r.ground_truth.has_value();
    with_inst += r.instances.has_value();
    with_color += r.color.has_value();
  }
  fmt::print("scene      {}\n", seq.root.string());
  fmt::print("camera     {}x{} fx={} fy={} cx={} cy={}\n", seq.intrinsics.width, seq.intrinsics.height,
             seq.intrinsics.fx, seq.intrinsics.fy, seq.intrinsics.cx, seq.intrinsics.cy);
  fmt::print("frames     {} ({} train, {} test, {} dropped)\n", seq.frames.size(), seq.train_count(),
             seq.test_frames().size(), seq.dropped);
  fmt::print("optional   color {}, gt {}, instances {}\n", with_color, with_gt, with_inst);
  return 0;
}

template <typename Stage>
int per_voxel(const Flags& f, Stage stage) {
  const PipelineConfig c = resolve(f);
  require_paths(c);
  const Sequence seq = ingest_scene(c.scene, c.train_fraction);
  for (double vs : c.voxel_sizes) stage(seq, c, vs, c.output_dir(vs));
  return 0;
}

int eval(const Flags& f) {
  const PipelineConfig c = resolve(f);
  if (c.scene.empty()) throw ConfigError("--scene is required");
  const Split split = parse_split(f.split);
  const Sequence seq = ingest_scene(c.scene, c.train_fraction);
  if (!f.pred_dir.empty()) {
    const auto frames = select(seq, split);
    const ConfusionMatrix cm = f.gt_dir.empty() ? evaluate_directory(seq, frames, f.pred_dir, c.labels)
                                                : evaluate_directories(frames, f.pred_dir, f.gt_dir, c.labels);
    const fs::path reports = c.out.empty() ? fs::path(f.pred_dir) : c.out;
    fs::create_directories(reports);
    write_report(cm, reports, fmt::format("eval_{}", f.split), fs::path(f.pred_dir).filename().string());
    fmt::print("{}", format_report(cm, fmt::format("{} ({} split)", f.pred_dir, f.split)));
    return 0;
  }
  if (c.out.empty()) throw ConfigError("--out is required");
  for (double vs : c.voxel_sizes) {
    for (const auto& [stem, miou] : run_eval(seq, c, split, c.output_dir(vs)))
      fmt::print("{:.2f} cm  {:<12} mIoU {:.4f}\n", vs * 100.0, stem, miou);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_pattern("%l: %v");
  CLI::App app{"Multi-view consistent and instance-refined pseudo-labels from RGB-D sequences"};
  app.require_subcommand(1);
  app.fallthrough();

  Flags f;
  app.add_option("--config", f.config, "TOML configuration (a scene spec for synth)");
  app.add_option("--scene", f.scene, "scene dataset directory");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--voxel-size", f.voxel_sizes, "voxel size(s) in meters");
  app.add_option("--strategy", f.strategy, "grid, informed or both");
  app.add_option("--d", f.d, "grid prompt spacing in pixels");
  app.add_option("--min-area-pct", f.min_area_pct, "informed prompting minimum cluster area, percent of image");
  app.add_option("--segmenter", f.segmenter, "oracle or exchange");
  app.add_option("--seed", f.seed, "random seed");
  app.add_option("--workers", f.workers, "worker threads (0 = all cores)");

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic scene dataset");
  synth_cmd->add_option("--frames", f.frames, "trajectory length");
  synth_cmd->add_option("--p", f.flip_rate, "label flip probability");
  synth_cmd->add_option("--tau", f.tau, "partial-view visibility threshold");
  auto* ingest_cmd = app.add_subcommand("ingest-check", "validate a scene directory and summarize it");
  auto* integrate_cmd = app.add_subcommand("integrate", "fuse the train split into a semantic volume");
  auto* render_cmd = app.add_subcommand("render", "render multi-view consistent labels");
  auto* prompts_cmd = app.add_subcommand("prompts", "write segmenter prompt files");
  auto* refine_cmd = app.add_subcommand("refine", "instance-aware refinement of rendered labels");
  auto* eval_cmd = app.add_subcommand("eval", "mIoU reports against ground truth");
  eval_cmd->add_option("--split", f.split, "train, test or all");
  eval_cmd->add_option("--pred-dir", f.pred_dir, "evaluate this directory of <n>.png labels");
  eval_cmd->add_option("--gt-dir", f.gt_dir, "ground truth directory instead of the scene's .gt.png");
  auto* manifest_cmd = app.add_subcommand("manifest", "emit training manifests");
  auto* pipeline_cmd = app.add_subcommand("pipeline", "run every stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth_cmd->parsed()) return synth(f);
    if (ingest_cmd->parsed()) return ingest_check(f);
    if (integrate_cmd->parsed())
      return per_voxel(f, [](const Sequence& s, const PipelineConfig& c, double vs, const fs::path& dir) {
        const auto stats = run_integrate(s, c, vs, dir);
        fmt::print("{}: {} points, {} labels\n", dir.string(), stats.points_integrated, stats.labels_integrated);
      });
    if (render_cmd->parsed())
      return per_voxel(f, [](const Sequence& s, const PipelineConfig& c, double vs, const fs::path& dir) {
        run_render(s, c, vs, dir);
      });
    if (prompts_cmd->parsed())
      return per_voxel(f, [](const Sequence& s, const PipelineConfig& c, double, const fs::path& dir) {
        for (PromptStrategy st : c.strategies)
          fmt::print("{}: {} prompt files\n", exchange_dir(dir, st).string(), run_prompts(s, c, st, dir));
      });
    if (refine_cmd->parsed())
      return per_voxel(f, [](const Sequence& s, const PipelineConfig& c, double, const fs::path& dir) {
        for (PromptStrategy st : c.strategies) {
          const auto stats = run_refine(s, c, st, dir);
          fmt::print("{}: {} masks applied, {} skipped\n", refined_dir(dir, st).string(), stats.masks_applied,
                     stats.masks_skipped);
        }
      });
    if (eval_cmd->parsed()) return eval(f);
    if (manifest_cmd->parsed())
      return per_voxel(f, [](const Sequence& s, const PipelineConfig& c, double, const fs::path& dir) {
        for (PromptStrategy st : c.strategies) fmt::print("{}\n", emit_manifest(s, {st}, dir).string());
        if (c.strategies.size() > 1) fmt::print("{}\n", emit_manifest(s, c.strategies, dir).string());
      });
    if (pipeline_cmd->parsed()) {
      PipelineConfig c = resolve(f);
      require_paths(c);
      run_pipeline(c);
      return 0;
    }
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const DataError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const FormatError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const TransportError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
