#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pseudolabel/dataset.hpp"
#include "pseudolabel/evaluation.hpp"
#include "pseudolabel/refinement.hpp"
#include "pseudolabel/segmenter.hpp"
#include "pseudolabel/semantic_volume.hpp"

namespace pseudolabel {

enum class SegmenterKind { kOracle, kExchange };

struct PipelineConfig {
  std::filesystem::path scene;
  std::filesystem::path out;
  std::vector<double> voxel_sizes{0.05};
  double truncation_factor = 2.0;
  double max_range = 8.0;
  double train_fraction = 0.8;
  LabelSpace labels;
  RefinementConfig refinement;
  std::vector<PromptStrategy> strategies{PromptStrategy::kGrid, PromptStrategy::kInformed};
  SegmenterKind segmenter = SegmenterKind::kOracle;
  OraclePerturbation perturbation;
  double exchange_timeout_s = 600.0;
  std::uint64_t seed = 0;
  int workers = 0;

  /// Throws ConfigError.
  void validate() const;
  VolumeConfig volume_config(double voxel_size) const;
  /// `out` itself for a single voxel size, `out/voxel_<mm>mm` otherwise.
  std::filesystem::path output_dir(double voxel_size) const;

  /// Keys absent from the table keep their defaults. Throws ConfigError.
  static PipelineConfig from_json(const nlohmann::json& table);
  static PipelineConfig load(const std::filesystem::path& toml_path);
};

/// "grid", "informed" or "both".
std::vector<PromptStrategy> parse_strategies(std::string_view s);

// Every stage reads its inputs from disk and writes its outputs under `dir`,
// the output directory for one voxel size.

/// Fuses the train split into dir/volume.svol and writes dir/volume.stats.json.
IntegrationStats run_integrate(const Sequence& seq, const PipelineConfig& config, double voxel_size,
                               const std::filesystem::path& dir);

/// Renders dir/labels_mc/<n:06>.png at every train-split pose from dir/volume.svol.
void run_render(const Sequence& seq, const PipelineConfig& config, double voxel_size,
                const std::filesystem::path& dir);

/// Prompts for one frame's Y^MC; may be empty for informed prompting.
MaskRequest build_request(const Sequence& seq, const FrameRecord& record, const LabelMap& y_mc,
                          const RefinementConfig& refinement, const std::filesystem::path& exchange_dir);

std::filesystem::path exchange_dir(const std::filesystem::path& dir, PromptStrategy strategy);
std::filesystem::path refined_dir(const std::filesystem::path& dir, PromptStrategy strategy);

/// Writes dir/exchange_<strategy>/<n:06>.prompts.json for every train frame.
std::size_t run_prompts(const Sequence& seq, const PipelineConfig& config, PromptStrategy strategy,
                        const std::filesystem::path& dir);

/// Obtains masks from the configured segmenter and writes
/// dir/labels_ir_<strategy>/<n:06>.png plus refine_<strategy>.stats.json.
RefinementStats run_refine(const Sequence& seq, const PipelineConfig& config, PromptStrategy strategy,
                           const std::filesystem::path& dir);

/// Confusion matrix of <pred_dir>/<n:06>.png against the ground truth of `frames`.
/// Frames without ground truth raise DataError.
ConfusionMatrix evaluate_directory(const Sequence& seq, std::span<const FrameRecord> frames,
                                   const std::filesystem::path& pred_dir, const LabelSpace& space);
/// Same, against <gt_dir>/<n:06>.png instead of the sequence's ground truth.
ConfusionMatrix evaluate_directories(std::span<const FrameRecord> frames, const std::filesystem::path& pred_dir,
                                     const std::filesystem::path& gt_dir, const LabelSpace& space);

enum class Split { kTrain, kTest, kAll };
Split parse_split(std::string_view s);
std::span<const FrameRecord> select(const Sequence& seq, Split split);

/// Evaluates the raw predictions and every label directory present under `dir`
/// (labels_mc, labels_ir_grid, labels_ir_informed), writing reports to dir/eval.
/// Returns mIoU per report stem.
std::map<std::string, double> run_eval(const Sequence& seq, const PipelineConfig& config, Split split,
                                       const std::filesystem::path& dir);

struct ManifestRecord {
  std::filesystem::path image;
  std::filesystem::path label;
  std::string strategy;  // "G" or "I"
};

struct TrainingManifest {
  std::string tag;  // "G", "I" or "GI"
  std::vector<ManifestRecord> records;
  std::string note;
};

/// One record per train frame and strategy. Every path must exist (DataError).
TrainingManifest build_manifest(const Sequence& seq, const std::vector<PromptStrategy>& strategies,
                                const std::filesystem::path& dir);
/// Writes dir/manifest_<tag>.json and returns its path.
std::filesystem::path emit_manifest(const Sequence& seq, const std::vector<PromptStrategy>& strategies,
                                    const std::filesystem::path& dir);

/// Every stage for every configured voxel size.
void run_pipeline(const PipelineConfig& config);

}  // namespace pseudolabel
