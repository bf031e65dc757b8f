#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pointprop/embedding_field.hpp"
#include "pointprop/error.hpp"
#include "pointprop/parallel.hpp"
#include "pointprop/raster.hpp"

namespace pointprop {

/// Labeled pixels in labeling order, each with a copy of its embedding.
class LabeledPointSet {
 public:
  LabeledPointSet() = default;
  explicit LabeledPointSet(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }

  const PointLabel& operator[](std::size_t i) const noexcept { return labels_[i]; }
  const std::vector<PointLabel>& labels() const noexcept { return labels_; }
  std::span<const float> embedding(std::size_t i) const noexcept { return {embeddings_.data() + i * dim_, dim_}; }
  bool degenerate(std::size_t i) const noexcept { return degenerate_[i] != 0; }

  /// Index of the label at (x, y), or size() when none.
  std::size_t find(std::size_t x, std::size_t y) const noexcept {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i].x == x && labels_[i].y == y) return i;
    }
    return labels_.size();
  }
  bool contains(std::size_t x, std::size_t y) const noexcept { return find(x, y) != labels_.size(); }

  /// Appends a label. Re-adding an identical label is a no-op returning false;
  /// relabeling an existing pixel with a different class throws DuplicatePoint.
  bool add(const PointLabel& label, std::span<const float> embedding, bool degenerate = false) {
    if (labels_.empty() && dim_ == 0) dim_ = embedding.size();
    if (embedding.size() != dim_) throw Error(Errc::DimensionMismatch, "embedding length differs from label set");
    const std::size_t existing = find(label.x, label.y);
    if (existing != labels_.size()) {
      if (labels_[existing].class_id == label.class_id) return false;
      throw Error(Errc::DuplicatePoint, "pixel (" + std::to_string(label.x) + "," + std::to_string(label.y) +
                                            ") already labeled with a different class");
    }
    labels_.push_back(label);
    embeddings_.insert(embeddings_.end(), embedding.begin(), embedding.end());
    degenerate_.push_back(degenerate ? 1 : 0);
    return true;
  }

  /// Appends a label taking its embedding from the field.
  bool add(const FeatureField& field, const PointLabel& label) {
    if (label.x >= field.width() || label.y >= field.height()) {
      throw Error(Errc::OutOfBounds, "label (" + std::to_string(label.x) + "," + std::to_string(label.y) +
                                         ") outside feature field");
    }
    return add(label, field.at(label.x, label.y), field.degenerate(label.x, label.y));
  }

 private:
  std::size_t dim_ = 0;
  std::vector<PointLabel> labels_;
  std::vector<float> embeddings_;
  std::vector<std::uint8_t> degenerate_;
};

inline LabeledPointSet make_label_set(const FeatureField& field, std::span<const PointLabel> labels) {
  LabeledPointSet set(field.dim());
  for (const PointLabel& label : labels) set.add(field, label);
  return set;
}

/// sim(p, l) accessor over a field and a label set.
class LabelSimilarity {
 public:
  LabelSimilarity(const FeatureField& field, const LabeledPointSet& labels) : field_(field), labels_(labels) {
    if (!labels.empty() && labels.dim() != field.dim()) {
      throw Error(Errc::DimensionMismatch, "label embeddings and field differ in dimension");
    }
  }

  double operator()(std::size_t x, std::size_t y, std::size_t label) const {
    if (x >= field_.width() || y >= field_.height() || label >= labels_.size()) {
      throw Error(Errc::OutOfBounds, "similarity index out of range");
    }
    return dot(field_.at(x, y), labels_.embedding(label));
  }

  /// Similarities of one pixel to every label, in labeling order.
  std::vector<double> row(std::size_t x, std::size_t y) const {
    std::vector<double> sims(labels_.size());
    for (std::size_t l = 0; l < labels_.size(); ++l) sims[l] = (*this)(x, y, l);
    return sims;
  }

 private:
  const FeatureField& field_;
  const LabeledPointSet& labels_;
};

struct PropagationConfig {
  std::size_t k = 1;
  std::size_t block_rows = 64;
};

namespace detail {

struct Neighbor {
  double sim;
  std::size_t index;  // labeling order
};

inline bool closer(const Neighbor& a, const Neighbor& b) noexcept {
  return a.sim > b.sim || (a.sim == b.sim && a.index < b.index);
}

// Majority class among the k nearest. Ties go to the class of the single
// nearest neighbor, then to the class holding the earliest-labeled member.
inline std::uint8_t vote(std::span<const Neighbor> nearest, const LabeledPointSet& labels,
                         std::vector<std::size_t>& counts) {
  std::fill(counts.begin(), counts.end(), 0);
  std::size_t best_count = 0;
  for (const Neighbor& n : nearest) best_count = std::max(best_count, ++counts[labels[n.index].class_id]);
  const std::uint8_t first_class = labels[nearest.front().index].class_id;
  if (counts[first_class] == best_count) return first_class;
  std::size_t earliest = labels.size();
  std::uint8_t winner = first_class;
  for (const Neighbor& n : nearest) {
    const std::uint8_t cls = labels[n.index].class_id;
    if (counts[cls] == best_count && n.index < earliest) {
      earliest = n.index;
      winner = cls;
    }
  }
  return winner;
}

}  // namespace detail

/// Dense class mask by k-nearest-neighbor voting over cosine similarity to the
/// labeled embeddings. Labeled pixels keep their given class. Labels carrying
/// kUnlabeled or a degenerate embedding never act as neighbors (degenerate ones
/// are used only if nothing else is available).
inline ClassMask propagate(const FeatureField& field, const LabeledPointSet& labels,
                           const PropagationConfig& cfg = {}) {
  if (labels.empty()) throw Error(Errc::EmptyLabelSet, "propagation needs at least one label");
  if (labels.dim() != field.dim()) throw Error(Errc::DimensionMismatch, "label embeddings and field differ");
  if (cfg.k < 1 || cfg.k > labels.size()) {
    throw Error(Errc::InvalidConfig, "k must satisfy 1 <= k <= number of labels");
  }

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].class_id != kUnlabeled && !labels.degenerate(i)) candidates.push_back(i);
  }
  if (candidates.empty()) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i].class_id != kUnlabeled) candidates.push_back(i);
    }
  }

  ClassMask mask(field.width(), field.height(), kUnlabeled);
  if (!candidates.empty()) {
    const std::size_t k = std::min(cfg.k, candidates.size());
    const std::size_t width = field.width();
    parallel_for(0, field.height(), cfg.block_rows, [&](std::size_t y0, std::size_t y1) {
      std::vector<detail::Neighbor> scratch(candidates.size());
      std::vector<std::size_t> counts(256);
      for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          const std::span<const float> v = field.at(x, y);
          if (k == 1) {
            std::size_t best = candidates.front();
            double best_sim = dot(v, labels.embedding(best));
            for (std::size_t c = 1; c < candidates.size(); ++c) {
              const double s = dot(v, labels.embedding(candidates[c]));
              if (s > best_sim) {
                best_sim = s;
                best = candidates[c];
              }
            }
            mask(x, y) = labels[best].class_id;
            continue;
          }
          for (std::size_t c = 0; c < candidates.size(); ++c) {
            scratch[c] = {dot(v, labels.embedding(candidates[c])), candidates[c]};
          }
          std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), scratch.end(),
                            detail::closer);
          mask(x, y) = detail::vote(std::span(scratch.data(), k), labels, counts);
        }
      }
    });
  }
  for (const PointLabel& label : labels.labels()) mask(label.x, label.y) = label.class_id;
  return mask;
}

}  // namespace pointprop
