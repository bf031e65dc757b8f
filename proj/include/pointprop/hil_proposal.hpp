#pragma once

// Human-in-the-loop point proposal. After each label the engine maintains
//   max_sim(p) = max_l sim(v_p, v_l)            C = 1 - max_sim
//   D(p)       = distance to nearest label      D_smooth = 1 - exp(-D^2 / (2 sigma^2))
//   M          = (D_smooth + lambda * C) / (lambda + 1)
// and proposes argmax M over unlabeled pixels.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pointprop/distance_transform.hpp"
#include "pointprop/embedding_field.hpp"
#include "pointprop/error.hpp"
#include "pointprop/knn_propagation.hpp"
#include "pointprop/raster.hpp"

namespace pointprop {

struct HilConfig {
  double lambda = 2.2;
  double sigma = 50.0;
  std::size_t initial_points = 10;
  std::size_t budget = 10;

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw Error(Errc::InvalidConfig, "lambda must be > 0");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(Errc::InvalidConfig, "sigma must be > 0");
    if (initial_points < 1) throw Error(Errc::InvalidConfig, "initial_points must be >= 1");
    if (budget < initial_points) throw Error(Errc::InvalidConfig, "budget must be >= initial_points");
  }
};

// --- elementwise map algebra -------------------------------------------------

/// D_smooth = 1 - exp(-D^2 / (2 sigma^2)).
inline double smooth_distance(double distance, double sigma) noexcept {
  return 1.0 - std::exp(-(distance * distance) / (2.0 * sigma * sigma));
}

inline Map smooth_distance(const Map& distance, double sigma) {
  if (!(sigma > 0.0)) throw Error(Errc::InvalidConfig, "sigma must be > 0");
  Map out(distance.width(), distance.height());
  for (std::size_t i = 0; i < out.size(); ++i) out.storage()[i] = smooth_distance(distance.storage()[i], sigma);
  return out;
}

/// M = (D_smooth + lambda C) / (lambda + 1). Not clamped: C may exceed 1 when
/// similarities are negative.
inline double combine(double uncertainty, double smoothed_distance, double lambda) noexcept {
  return (smoothed_distance + lambda * uncertainty) / (lambda + 1.0);
}

inline Map combine(const Map& uncertainty, const Map& smoothed_distance, double lambda) {
  if (!uncertainty.same_shape(smoothed_distance)) throw Error(Errc::DimensionMismatch, "map shapes differ");
  if (!(lambda > 0.0)) throw Error(Errc::InvalidConfig, "lambda must be > 0");
  Map out(uncertainty.width(), uncertainty.height());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.storage()[i] = combine(uncertainty.storage()[i], smoothed_distance.storage()[i], lambda);
  }
  return out;
}

struct Proposal {
  std::size_t x = 0;
  std::size_t y = 0;
  double value = 0.0;

  Pixel pixel() const noexcept { return {x, y}; }
  friend bool operator==(const Proposal&, const Proposal&) = default;
};

/// Row-major argmax of `scores` over pixels where `blocked` is zero; the first
/// (smallest row, then column) maximum wins.
inline Proposal argmax_unblocked(const Map& scores, const Raster<std::uint8_t>& blocked) {
  std::optional<Proposal> best;
  for (std::size_t y = 0; y < scores.height(); ++y) {
    for (std::size_t x = 0; x < scores.width(); ++x) {
      if (blocked(x, y) != 0) continue;
      const double value = scores(x, y);
      if (!best || value > best->value) best = Proposal{x, y, value};
    }
  }
  if (!best) throw Error(Errc::AllPixelsLabeled, "no unlabeled pixel left to propose");
  return *best;
}

// --- proposal state ---------------------------------------------------------

/// Running maps for one image. Single owner; mutated sequentially.
class ProposalState {
 public:
  ProposalState() = default;
  ProposalState(std::size_t width, std::size_t height)
      : max_sim_(width, height, -std::numeric_limits<double>::infinity()),
        uncertainty_(width, height, std::numeric_limits<double>::infinity()),
        squared_distance_(width, height, std::numeric_limits<double>::infinity()),
        distance_(width, height, std::numeric_limits<double>::infinity()),
        smoothed_(width, height, 1.0),
        combined_(width, height, std::numeric_limits<double>::infinity()),
        blocked_(width, height, 0) {}

  std::size_t width() const noexcept { return max_sim_.width(); }
  std::size_t height() const noexcept { return max_sim_.height(); }
  std::size_t label_count() const noexcept { return labeled_.size(); }
  const std::vector<Pixel>& labeled() const noexcept { return labeled_; }

  const Map& max_similarity() const noexcept { return max_sim_; }
  const Map& uncertainty() const noexcept { return uncertainty_; }
  const Map& distance() const noexcept { return distance_; }
  const Map& smoothed_distance() const noexcept { return smoothed_; }
  const Map& combined() const noexcept { return combined_; }
  /// Nonzero for labeled or excluded pixels; these are never proposed.
  const Raster<std::uint8_t>& blocked() const noexcept { return blocked_; }

  /// max_sim <- max(max_sim, sim(pixel, embedding)); C recomputed.
  void update_similarity(const FeatureField& field, std::span<const float> embedding) {
    if (field.width() != width() || field.height() != height() || embedding.size() != field.dim()) {
      throw Error(Errc::DimensionMismatch, "field/state/embedding shapes differ");
    }
    parallel_for(0, height(), 32, [&](std::size_t y0, std::size_t y1) {
      for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = 0; x < width(); ++x) {
          const double s = dot(field.at(x, y), embedding);
          double& best = max_sim_(x, y);
          if (s > best) best = s;
          uncertainty_(x, y) = 1.0 - best;
        }
      }
    });
  }

  /// Folds a new labeled coordinate into D (elementwise min of squared
  /// distances, exact in double) and blocks it from proposals.
  void add_labeled_pixel(Pixel p) {
    if (!max_sim_.contains(p.x, p.y)) throw Error(Errc::OutOfBounds, "labeled pixel outside state");
    labeled_.push_back(p);
    blocked_(p.x, p.y) = 1;
    for (std::size_t y = 0; y < height(); ++y) {
      const double dy = static_cast<double>(y) - static_cast<double>(p.y);
      for (std::size_t x = 0; x < width(); ++x) {
        const double dx = static_cast<double>(x) - static_cast<double>(p.x);
        double& d2 = squared_distance_(x, y);
        d2 = std::min(d2, dx * dx + dy * dy);
        distance_(x, y) = std::sqrt(d2);
      }
    }
  }

  /// Excludes a pixel from proposals without labeling it.
  void exclude(Pixel p) { blocked_.at(p.x, p.y) = 1; }

  /// Recomputes D_smooth and M from the current C and D.
  void refresh(double lambda, double sigma) {
    for (std::size_t i = 0; i < combined_.size(); ++i) {
      const double ds = smooth_distance(distance_.storage()[i], sigma);
      smoothed_.storage()[i] = ds;
      combined_.storage()[i] = combine(uncertainty_.storage()[i], ds, lambda);
    }
  }

  Proposal propose_next() const {
    if (labeled_.empty()) throw Error(Errc::EmptyLabelSet, "proposals need at least one label");
    return argmax_unblocked(combined_, blocked_);
  }

 private:
  Map max_sim_;
  Map uncertainty_;
  Map squared_distance_;
  Map distance_;
  Map smoothed_;
  Map combined_;
  Raster<std::uint8_t> blocked_;
  std::vector<Pixel> labeled_;
};

/// Labels, maps and configuration for one image; the unit shared by the batch
/// loop and the interactive service, so both produce identical proposals.
class HilEngine {
 public:
  HilEngine(std::shared_ptr<const FeatureField> field, HilConfig cfg)
      : field_(std::move(field)), cfg_(cfg), labels_(field_->dim()), state_(field_->width(), field_->height()) {
    cfg_.validate();
  }

  const FeatureField& field() const noexcept { return *field_; }
  const HilConfig& config() const noexcept { return cfg_; }
  const LabeledPointSet& labels() const noexcept { return labels_; }
  const ProposalState& state() const noexcept { return state_; }

  /// Adds a label and updates every map. Returns false for an identical repeat.
  bool add_label(const PointLabel& label) {
    if (!labels_.add(*field_, label)) return false;
    state_.update_similarity(*field_, labels_.embedding(labels_.size() - 1));
    state_.add_labeled_pixel(label.pixel());
    state_.refresh(cfg_.lambda, cfg_.sigma);
    return true;
  }

  void exclude(Pixel p) { state_.exclude(p); }

  Proposal propose_next() const { return state_.propose_next(); }

 private:
  std::shared_ptr<const FeatureField> field_;
  HilConfig cfg_;
  LabeledPointSet labels_;
  ProposalState state_;
};

/// Source of class labels: a simulated expert over ground truth, or a human.
class Expert {
 public:
  virtual ~Expert() = default;
  /// Up to n seed labels (central pixels of the largest instances).
  virtual std::vector<PointLabel> seed_points(std::size_t n) = 0;
  /// Class of the pixel at (x, y); kUnlabeled when unknown.
  virtual std::uint8_t query(std::size_t x, std::size_t y) = 0;
};

/// What to do when the expert answers kUnlabeled.
enum class UnknownPolicy {
  LabelAsReserved,  // keep the point with the reserved id; it counts toward the budget
  Repropose,        // exclude the pixel and propose the next-best location
};

/// Seeds, then alternates propose / query / incorporate until the budget is
/// spent or no pixel is left. Returns the labels in labeling order.
inline LabeledPointSet run_hil_session(std::shared_ptr<const FeatureField> field, Expert& expert,
                                       const HilConfig& cfg,
                                       UnknownPolicy policy = UnknownPolicy::LabelAsReserved) {
  HilEngine engine(std::move(field), cfg);
  const std::size_t seeds = std::min(cfg.initial_points, cfg.budget);
  std::vector<PointLabel> seed_labels = expert.seed_points(seeds);
  if (seed_labels.size() > seeds) seed_labels.resize(seeds);
  for (const PointLabel& label : seed_labels) engine.add_label(label);

  while (engine.labels().size() < cfg.budget) {
    if (engine.labels().empty()) break;
    Proposal next;
    try {
      next = engine.propose_next();
    } catch (const Error& e) {
      if (e.code() == Errc::AllPixelsLabeled) break;
      throw;
    }
    const std::uint8_t cls = expert.query(next.x, next.y);
    if (cls == kUnlabeled && policy == UnknownPolicy::Repropose) {
      engine.exclude(next.pixel());
      continue;
    }
    engine.add_label({next.x, next.y, cls});
  }
  return engine.labels();
}

inline LabeledPointSet run_hil_session(const FeatureField& field, Expert& expert, const HilConfig& cfg,
                                       UnknownPolicy policy = UnknownPolicy::LabelAsReserved) {
  return run_hil_session(std::make_shared<const FeatureField>(field), expert, cfg, policy);
}

}  // namespace pointprop
