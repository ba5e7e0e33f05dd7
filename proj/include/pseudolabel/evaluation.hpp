#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pseudolabel/label_map.hpp"
#include "pseudolabel/parallel.hpp"

namespace pseudolabel {

struct ClassScore {
  ClassId class_id = 0;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::optional<double> iou;  // undefined when tp + fp + fn == 0
};

/// Rows are ground-truth classes; columns are predicted classes plus one
/// reserved "none" column counting pixels the prediction left as ignore.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = 40);

  int num_classes() const { return num_classes_; }
  int none_column() const { return num_classes_; }

  std::uint64_t at(int gt, int pred_column) const {
    return counts_[static_cast<std::size_t>(gt) * stride() + static_cast<std::size_t>(pred_column)];
  }
  std::uint64_t& at(int gt, int pred_column) {
    return counts_[static_cast<std::size_t>(gt) * stride() + static_cast<std::size_t>(pred_column)];
  }
  std::uint64_t ignored() const { return ignored_; }
  /// Compared (non-ignored) pixels.
  std::uint64_t total() const;

  /// Pixels with gt = ignore are counted as ignored; pred = ignore against a
  /// labeled gt lands in the none column. Throws std::invalid_argument on
  /// dimension mismatch or labels outside the class range.
  void accumulate(const LabelMap& pred, const LabelMap& gt, Execution exec = Execution::kParallel);
  void merge(const ConfusionMatrix& other);

  std::uint64_t true_positives(int c) const { return at(c, c); }
  std::uint64_t false_positives(int c) const;
  std::uint64_t false_negatives(int c) const;

  std::vector<ClassScore> iou_per_class() const;
  /// Mean over defined classes. Throws UndefinedResultError if none is defined.
  double miou() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t stride() const { return static_cast<std::size_t>(num_classes_) + 1; }

  int num_classes_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t ignored_ = 0;
};

/// Fixed-width text table with per-class IoU and the mean.
std::string format_report(const ConfusionMatrix& cm, const std::string& title = {});
/// `class_id,name,tp,fp,fn,iou` with one row per defined class.
std::string format_csv(const ConfusionMatrix& cm);

struct EvalReport {
  std::filesystem::path text;
  std::filesystem::path csv;
  std::filesystem::path json;
};

/// Writes <stem>.txt, <stem>.csv and <stem>.json under `dir`.
EvalReport write_report(const ConfusionMatrix& cm, const std::filesystem::path& dir,
                        const std::string& stem, const std::string& title = {});

}  // namespace pseudolabel
