#pragma once

// Pixel accuracy (PA), mean per-class pixel accuracy (mPA) and mean IoU.
//
// Class inclusion for the means:
//   * mPA averages over classes present in the ground truth (row sum > 0).
//   * mIoU averages over classes present in ground truth or prediction
//     (TP + FP + FN > 0), so a hallucinated class contributes IoU 0.
// Dataset-level numbers come from summing confusion matrices, not from
// averaging per-image scores.

#include <algorithm>
#include <bitset>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pointprop/error.hpp"
#include "pointprop/raster.hpp"

namespace pointprop {

using ClassSet = std::bitset<256>;

inline ClassSet make_class_set(std::initializer_list<std::uint8_t> ids) {
  ClassSet set;
  for (std::uint8_t id : ids) set.set(id);
  return set;
}

class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t class_count)
      : classes_(class_count), counts_(class_count * class_count, 0), unassigned_(class_count, 0) {
    if (class_count == 0 || class_count > 255) throw Error(Errc::InvalidConfig, "class count must be in [1, 255]");
  }

  std::size_t class_count() const noexcept { return classes_; }
  std::uint64_t count(std::size_t gt, std::size_t pred) const noexcept { return counts_[gt * classes_ + pred]; }
  /// Pixels of class gt that the prediction left as kUnlabeled.
  std::uint64_t unassigned(std::size_t gt) const noexcept { return unassigned_[gt]; }
  std::uint64_t ignored() const noexcept { return ignored_; }

  /// Evaluated pixels (everything not ignored).
  std::uint64_t total() const noexcept {
    std::uint64_t sum = 0;
    for (std::uint64_t c : counts_) sum += c;
    for (std::uint64_t u : unassigned_) sum += u;
    return sum;
  }

  bool empty() const noexcept { return total() == 0; }

  void add(std::uint8_t gt, std::uint8_t pred, const ClassSet& ignore) {
    if (ignore.test(gt)) {
      ++ignored_;
      return;
    }
    if (gt >= classes_) throw Error(Errc::ClassIdOutOfRange, "ground-truth id " + std::to_string(gt));
    if (pred == kUnlabeled) {
      ++unassigned_[gt];
      return;
    }
    if (pred >= classes_) throw Error(Errc::ClassIdOutOfRange, "predicted id " + std::to_string(pred));
    ++counts_[gt * classes_ + pred];
  }

  /// Elementwise sum; associative and commutative.
  ConfusionMatrix& merge(const ConfusionMatrix& other) {
    if (other.classes_ != classes_) throw Error(Errc::ShapeMismatch, "confusion matrices differ in class count");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    for (std::size_t i = 0; i < unassigned_.size(); ++i) unassigned_[i] += other.unassigned_[i];
    ignored_ += other.ignored_;
    return *this;
  }

  std::uint64_t row_sum(std::size_t gt) const noexcept {
    std::uint64_t sum = unassigned_[gt];
    for (std::size_t p = 0; p < classes_; ++p) sum += count(gt, p);
    return sum;
  }

  std::uint64_t column_sum(std::size_t pred) const noexcept {
    std::uint64_t sum = 0;
    for (std::size_t g = 0; g < classes_; ++g) sum += count(g, pred);
    return sum;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_ = 0;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> unassigned_;
  std::uint64_t ignored_ = 0;
};

inline ConfusionMatrix confusion_matrix(const ClassMask& gt, const ClassMask& pred, const ClassSet& ignore,
                                  std::size_t class_count) {
  if (!gt.same_shape(pred)) throw Error(Errc::ShapeMismatch, "ground truth and prediction differ in size");
  ConfusionMatrix cm(class_count);
  for (std::size_t i = 0; i < gt.size(); ++i) cm.add(gt.storage()[i], pred.storage()[i], ignore);
  return cm;
}

inline double pixel_accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw Error(Errc::EmptyMatrix, "no evaluated pixels");
  std::uint64_t correct = 0;
  for (std::size_t c = 0; c < cm.class_count(); ++c) correct += cm.count(c, c);
  return static_cast<double>(correct) / static_cast<double>(total);
}

inline std::optional<double> class_accuracy(const ConfusionMatrix& cm, std::size_t c) {
  const std::uint64_t row = cm.row_sum(c);
  if (row == 0) return std::nullopt;
  return static_cast<double>(cm.count(c, c)) / static_cast<double>(row);
}

inline std::optional<double> class_iou(const ConfusionMatrix& cm, std::size_t c) {
  const std::uint64_t tp = cm.count(c, c);
  const std::uint64_t denom = cm.row_sum(c) + cm.column_sum(c) - tp;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(denom);
}

namespace detail {

template <class PerClass>
double mean_over_defined(const ConfusionMatrix& cm, PerClass per_class) {
  if (cm.empty()) throw Error(Errc::EmptyMatrix, "no evaluated pixels");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < cm.class_count(); ++c) {
    if (const std::optional<double> v = per_class(cm, c)) {
      sum += *v;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace detail

inline double mean_pixel_accuracy(const ConfusionMatrix& cm) { return detail::mean_over_defined(cm, class_accuracy); }

inline double mean_iou(const ConfusionMatrix& cm) { return detail::mean_over_defined(cm, class_iou); }

struct ClassScore {
  std::size_t class_id = 0;
  std::optional<double> accuracy;
  std::optional<double> iou;
};

struct Metrics {
  double pa = 0.0;
  double mpa = 0.0;
  double miou = 0.0;
  std::vector<ClassScore> per_class;  // classes with at least one defined score
};

inline Metrics compute_metrics(const ConfusionMatrix& cm) {
  Metrics m;
  m.pa = pixel_accuracy(cm);
  m.mpa = mean_pixel_accuracy(cm);
  m.miou = mean_iou(cm);
  for (std::size_t c = 0; c < cm.class_count(); ++c) {
    ClassScore score{c, class_accuracy(cm, c), class_iou(cm, c)};
    if (score.accuracy || score.iou) m.per_class.push_back(score);
  }
  return m;
}

}  // namespace pointprop
