#include "pseudolabel/evaluation.hpp"

#include <fstream>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pseudolabel/errors.hpp"

namespace pseudolabel {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes) * (static_cast<std::size_t>(num_classes) + 1), 0) {
  LabelSpace{num_classes}.validate();
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t sum = 0;
  for (auto c : counts_) sum += c;
  return sum;
}

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& gt, Execution exec) {
  if (!pred.same_shape(gt))
    throw std::invalid_argument(fmt::format("prediction is {}x{}, ground truth {}x{}",
                                            pred.width(), pred.height(), gt.width(), gt.height()));
  const LabelSpace space{num_classes_};
  const auto tally = [&](ConfusionMatrix& cm, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const ClassId g = gt[i];
      const ClassId p = pred[i];
      if (g == kIgnoreLabel) {
        ++cm.ignored_;
        continue;
      }
      if (!space.is_valid(g) || !space.is_admissible(p))
        throw std::invalid_argument(fmt::format("label outside [0, {}) at pixel {}", num_classes_, i));
      ++cm.at(g, p == kIgnoreLabel ? none_column() : p);
    }
  };

  if (exec == Execution::kSerial) {
    tally(*this, 0, gt.size());
    return;
  }

  // Per-row partial matrices merged in order; integer counts keep this exact.
  const int rows = gt.height();
  const auto w = static_cast<std::size_t>(gt.width());
  ExceptionSlot errors;
#pragma omp parallel
  {
    ConfusionMatrix local(num_classes_);
#pragma omp for schedule(static)
    for (int v = 0; v < rows; ++v)
      errors.run([&] { tally(local, static_cast<std::size_t>(v) * w, static_cast<std::size_t>(v + 1) * w); });
#pragma omp critical(confusion_merge)
    merge(local);
  }
  errors.rethrow();
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_)
    throw std::invalid_argument("cannot merge confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  ignored_ += other.ignored_;
}

std::uint64_t ConfusionMatrix::false_positives(int c) const {
  std::uint64_t sum = 0;
  for (int g = 0; g < num_classes_; ++g)
    if (g != c) sum += at(g, c);
  return sum;
}

std::uint64_t ConfusionMatrix::false_negatives(int c) const {
  std::uint64_t sum = 0;
  for (int p = 0; p <= num_classes_; ++p)
    if (p != c) sum += at(c, p);
  return sum;
}

std::vector<ClassScore> ConfusionMatrix::iou_per_class() const {
  std::vector<ClassScore> out;
  out.reserve(static_cast<std::size_t>(num_classes_));
  for (int c = 0; c < num_classes_; ++c) {
    ClassScore s;
    s.class_id = static_cast<ClassId>(c);
    s.tp = true_positives(c);
    s.fp = false_positives(c);
    s.fn = false_negatives(c);
    const std::uint64_t denom = s.tp + s.fp + s.fn;
    if (denom > 0) s.iou = static_cast<double>(s.tp) / static_cast<double>(denom);
    out.push_back(s);
  }
  return out;
}

double ConfusionMatrix::miou() const {
  double sum = 0.0;
  int defined = 0;
  for (const auto& s : iou_per_class()) {
    if (!s.iou) continue;
    sum += *s.iou;
    ++defined;
  }
  if (defined == 0) throw UndefinedResultError("mIoU undefined: no class was observed");
  return sum / defined;
}

std::string format_report(const ConfusionMatrix& cm, const std::string& title) {
  std::string out;
  if (!title.empty()) out += title + "\n";
  out += fmt::format("{:>5}  {:<16} {:>10} {:>10} {:>10} {:>8}\n", "class", "name", "tp", "fp",
                     "fn", "iou");
  for (const auto& s : cm.iou_per_class()) {
    if (!s.iou) continue;
    out += fmt::format("{:>5}  {:<16} {:>10} {:>10} {:>10} {:>8.4f}\n", s.class_id,
                       nyu40_class_name(s.class_id), s.tp, s.fp, s.fn, *s.iou);
  }
  out += fmt::format("pixels compared: {}  ignored: {}\n", cm.total(), cm.ignored());
  try {
    out += fmt::format("mIoU: {:.4f}\n", cm.miou());
  } catch (const UndefinedResultError&) {
    out += "mIoU: undefined\n";
  }
  return out;
}

std::string format_csv(const ConfusionMatrix& cm) {
  std::string out = "class_id,name,tp,fp,fn,iou\n";
  for (const auto& s : cm.iou_per_class()) {
    if (!s.iou) continue;
    out += fmt::format("{},{},{},{},{},{:.6f}\n", s.class_id, nyu40_class_name(s.class_id), s.tp,
                       s.fp, s.fn, *s.iou);
  }
  return out;
}

EvalReport write_report(const ConfusionMatrix& cm, const std::filesystem::path& dir,
                        const std::string& stem, const std::string& title) {
  std::filesystem::create_directories(dir);
  EvalReport paths{dir / (stem + ".txt"), dir / (stem + ".csv"), dir / (stem + ".json")};
  const auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write {}", p.string()));
    out << text;
  };
  write(paths.text, format_report(cm, title));
  write(paths.csv, format_csv(cm));

  nlohmann::ordered_json j;
  j["pixels_compared"] = cm.total();
  j["pixels_ignored"] = cm.ignored();
  try {
    j["miou"] = cm.miou();
  } catch (const UndefinedResultError&) {
    j["miou"] = nullptr;
  }
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (const auto& s : cm.iou_per_class()) {
    if (!s.iou) continue;
    classes.push_back({{"class_id", s.class_id},
                       {"name", std::string(nyu40_class_name(s.class_id))},
                       {"tp", s.tp},
                       {"fp", s.fp},
                       {"fn", s.fn},
                       {"iou", *s.iou}});
  }
  j["classes"] = std::move(classes);
  write(paths.json, j.dump(2) + "\n");
  return paths;
}

}  // namespace pseudolabel
