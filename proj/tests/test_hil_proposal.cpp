#include "pointprop/hil_proposal.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pointprop/distance_transform.hpp"
#include "pointprop/simulated_expert.hpp"

namespace pointprop {
namespace {

// Recomputes C, D, D_smooth and M for a label list from first principles and
// returns the row-major first argmax over unlabeled pixels.
struct ScratchMaps {
  Map c, d, ds, m;
};

ScratchMaps scratch_maps(const FeatureField& field, const std::vector<PointLabel>& labels, const HilConfig& cfg) {
  const std::size_t w = field.width(), h = field.height();
  ScratchMaps s{Map(w, h), Map(w, h), Map(w, h), Map(w, h)};
  std::vector<Pixel> pts;
  for (const auto& l : labels) pts.push_back(l.pixel());
  s.d = oracle::min_distance(pts, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double best = -2.0;
      for (const auto& l : labels) {
        best = std::max(best, oracle::dot(field.at(x, y).data(), field.at(l.x, l.y).data(), field.dim()));
      }
      s.c(x, y) = 1.0 - best;
      const double dd = s.d(x, y);
      s.ds(x, y) = 1.0 - std::exp(-dd * dd / (2.0 * cfg.sigma * cfg.sigma));
      s.m(x, y) = (s.ds(x, y) + cfg.lambda * s.c(x, y)) / (cfg.lambda + 1.0);
    }
  }
  return s;
}

Pixel scan_argmax(const Map& m, const std::vector<PointLabel>& labels) {
  Pixel best{};
  double best_v = -1e300;
  for (std::size_t y = 0; y < m.height(); ++y) {
    for (std::size_t x = 0; x < m.width(); ++x) {
      bool labeled = false;
      for (const auto& l : labels) labeled = labeled || (l.x == x && l.y == y);
      if (!labeled && m(x, y) > best_v) {
        best_v = m(x, y);
        best = {x, y};
      }
    }
  }
  return best;
}

/// Expert that answers from a mask and seeds from a fixed list.
class ScriptedExpert final : public Expert {
 public:
  ScriptedExpert(ClassMask gt, std::vector<PointLabel> seeds) : gt_(std::move(gt)), seeds_(std::move(seeds)) {}
  std::vector<PointLabel> seed_points(std::size_t n) override {
    return {seeds_.begin(), seeds_.begin() + static_cast<std::ptrdiff_t>(std::min(n, seeds_.size()))};
  }
  std::uint8_t query(std::size_t x, std::size_t y) override {
    queried.push_back({x, y});
    return gt_(x, y);
  }
  std::vector<Pixel> queried;

 private:
  ClassMask gt_;
  std::vector<PointLabel> seeds_;
};

TEST(DistanceMap, KnownValues) {
  const std::vector<Pixel> origin = {{0, 0}};
  const Map d = distance_map(origin, 6, 6);
  EXPECT_DOUBLE_EQ(d(3, 4), 5.0);
  EXPECT_DOUBLE_EQ(d(0, 0), 0.0);
  const std::vector<Pixel> pts = {{1, 1}, {4, 2}, {0, 5}};
  const Map d2 = distance_map(pts, 7, 5);
  for (const auto& p : pts) EXPECT_EQ(d2(p.x, p.y), 0.0);
  EXPECT_THROW(distance_map(std::vector<Pixel>{}, 4, 4), Error);
}

TEST(DistanceMap, MatchesBruteForce) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> count(1, 30);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Pixel> pts;
    for (const auto& l : oracle::random_labels(32, 32, count(rng), 1, rng)) pts.push_back(l.pixel());
    const Map fast = distance_map(pts, 32, 32);
    const Map slow = oracle::min_distance(pts, 32, 32);
    for (std::size_t i = 0; i < fast.size(); ++i) ASSERT_NEAR(fast.storage()[i], slow.storage()[i], 1e-6);
  }
}

TEST(DistanceMap, NonSquareAndThinImages) {
  std::mt19937_64 rng(32);
  for (auto [w, h] : {std::pair<std::size_t, std::size_t>{1, 17}, {23, 1}, {5, 40}, {41, 3}}) {
    std::vector<Pixel> pts;
    for (const auto& l : oracle::random_labels(w, h, 2, 1, rng)) pts.push_back(l.pixel());
    const Map fast = distance_map(pts, h, w);
    const Map slow = oracle::min_distance(pts, h, w);
    for (std::size_t i = 0; i < fast.size(); ++i) ASSERT_NEAR(fast.storage()[i], slow.storage()[i], 1e-6);
  }
}

TEST(SmoothDistance, KnownValuesAndMonotone) {
  EXPECT_EQ(smooth_distance(0.0, 50.0), 0.0);
  EXPECT_NEAR(smooth_distance(50.0, 50.0), 0.393469, 1e-6);
  EXPECT_NEAR(smooth_distance(50.0, 50.0), 1.0 - std::exp(-0.5), 1e-15);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 300.0);
  std::vector<double> ds(200);
  for (double& d : ds) d = u(rng);
  std::sort(ds.begin(), ds.end());
  for (std::size_t i = 1; i < ds.size(); ++i) {
    if (ds[i] > ds[i - 1]) {
      EXPECT_GE(smooth_distance(ds[i], 50.0), smooth_distance(ds[i - 1], 50.0));
    }
    EXPECT_LT(smooth_distance(ds[i], 50.0), 1.0);
  }
  EXPECT_LT(smooth_distance(10.0, 50.0), smooth_distance(11.0, 50.0));
  EXPECT_THROW(smooth_distance(Map(2, 2), 0.0), Error);
}

TEST(Combine, KnownValues) {
  EXPECT_EQ(combine(0.0, 0.0, 2.2), 0.0);
  EXPECT_NEAR(combine(0.04, 0.393469, 2.2), 0.150459, 1e-6);
  EXPECT_NEAR(combine(0.04, 0.393469, 2.2), (0.393469 + 2.2 * 0.04) / 3.2, 1e-15);
  for (double lambda : {0.1, 1.0, 2.2, 10.0}) EXPECT_NEAR(combine(0.37, 0.37, lambda), 0.37, 1e-15);
  EXPECT_THROW(combine(Map(2, 2), Map(3, 2), 1.0), Error);
}

TEST(UpdateSimilarity, SelfSimilarityAndMonotone) {
  std::mt19937_64 rng(5);
  const FeatureField field = oracle::random_field(12, 10, 6, rng);
  ProposalState state(12, 10);
  state.update_similarity(field, field.at(4, 3));
  EXPECT_NEAR(state.max_similarity()(4, 3), 1.0, 1e-6);
  EXPECT_NEAR(state.uncertainty()(4, 3), 0.0, 1e-6);
  Map before = state.uncertainty();
  for (int i = 0; i < 5; ++i) {
    state.update_similarity(field, field.pixel(rng() % field.pixel_count()));
    for (std::size_t j = 0; j < before.size(); ++j) EXPECT_LE(state.uncertainty().storage()[j], before.storage()[j]);
    before = state.uncertainty();
  }
  EXPECT_THROW(state.update_similarity(field, std::vector<float>(3)), Error);
}

TEST(UpdateSimilarity, KnownUncertainty) {
  FeatureField field(2, 1, 2);
  field.at(0, 0)[0] = 0.6f;
  field.at(0, 0)[1] = 0.8f;
  field.at(1, 0)[0] = 0.8f;
  field.at(1, 0)[1] = 0.6f;
  ProposalState state(2, 1);
  state.update_similarity(field, field.at(0, 0));
  EXPECT_NEAR(state.uncertainty()(1, 0), 0.04, 1e-6);
}

TEST(UpdateSimilarity, OrderIndependent) {
  std::mt19937_64 rng(6);
  const FeatureField field = oracle::random_field(9, 9, 5, rng);
  auto labels = oracle::random_labels(9, 9, 6, 2, rng);
  ProposalState a(9, 9), b(9, 9);
  for (const auto& l : labels) a.update_similarity(field, field.at(l.x, l.y));
  std::reverse(labels.begin(), labels.end());
  for (const auto& l : labels) b.update_similarity(field, field.at(l.x, l.y));
  EXPECT_EQ(a.max_similarity(), b.max_similarity());
}

TEST(ProposeNext, TieRuleAndExhaustion) {
  Map uniform(4, 3, 0.5);
  Raster<std::uint8_t> blocked(4, 3, 0);
  blocked(0, 0) = 1;
  const Proposal p = argmax_unblocked(uniform, blocked);
  EXPECT_EQ(p.x, 1u);
  EXPECT_EQ(p.y, 0u);

  std::fill(blocked.values().begin(), blocked.values().end(), 1);
  blocked(2, 1) = 0;
  EXPECT_EQ(argmax_unblocked(uniform, blocked).pixel(), (Pixel{2, 1}));
  blocked(2, 1) = 1;
  try {
    argmax_unblocked(uniform, blocked);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AllPixelsLabeled);
  }
}

TEST(ProposeNext, SingleUnlabeledPixel) {
  std::mt19937_64 rng(7);
  auto field = std::make_shared<const FeatureField>(oracle::random_field(2, 2, 3, rng));
  HilEngine engine(field, {2.2, 50.0, 1, 4});
  engine.add_label({0, 0, 1});
  engine.add_label({1, 0, 1});
  engine.add_label({0, 1, 1});
  EXPECT_EQ(engine.propose_next().pixel(), (Pixel{1, 1}));
  engine.add_label({1, 1, 2});
  EXPECT_THROW(engine.propose_next(), Error);
}

TEST(ProposeNext, MatchesFullScanAndScratchMaps) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    auto field = std::make_shared<const FeatureField>(oracle::random_field(20, 15, 6, rng));
    const HilConfig cfg{1.7, 6.0, 1, 30};
    HilEngine engine(field, cfg);
    const auto labels = oracle::random_labels(20, 15, 8, 3, rng);
    for (const auto& l : labels) engine.add_label(l);
    const ScratchMaps s = scratch_maps(*field, labels, cfg);
    const auto& st = engine.state();
    for (std::size_t i = 0; i < s.m.size(); ++i) {
      ASSERT_NEAR(st.uncertainty().storage()[i], s.c.storage()[i], 1e-6);
      ASSERT_NEAR(st.distance().storage()[i], s.d.storage()[i], 1e-6);
      ASSERT_NEAR(st.smoothed_distance().storage()[i], s.ds.storage()[i], 1e-6);
      ASSERT_NEAR(st.combined().storage()[i], s.m.storage()[i], 1e-6);
    }
    EXPECT_EQ(engine.propose_next().pixel(), scan_argmax(s.m, labels));
    // Incremental D equals the exact transform recomputed from scratch.
    const Map edt = distance_map(st.labeled(), 15, 20);
    for (std::size_t i = 0; i < edt.size(); ++i) ASSERT_EQ(edt.storage()[i], st.distance().storage()[i]);
  }
}

TEST(HilConfig, Validation) {
  EXPECT_NO_THROW((HilConfig{}.validate()));
  EXPECT_THROW((HilConfig{0.0, 50.0, 1, 1}.validate()), Error);
  EXPECT_THROW((HilConfig{1.0, -1.0, 1, 1}.validate()), Error);
  EXPECT_THROW((HilConfig{1.0, 1.0, 0, 1}.validate()), Error);
  EXPECT_THROW((HilConfig{1.0, 1.0, 5, 4}.validate()), Error);
}

TEST(Session, SeedsOnlyWhenBudgetEqualsInitial) {
  std::mt19937_64 rng(9);
  const FeatureField field = oracle::random_field(16, 16, 4, rng);
  const auto seeds = oracle::random_labels(16, 16, 5, 2, rng);
  ScriptedExpert expert(ClassMask(16, 16, 1), seeds);
  const LabeledPointSet out = run_hil_session(field, expert, {2.2, 50.0, 5, 5});
  EXPECT_EQ(out.labels(), seeds);
  EXPECT_TRUE(expert.queried.empty());
}

TEST(Session, TwoClassFieldProposalsFollowScratchArgmax) {
  // Left 3/4 of the image is prototype e0, right quarter e1; the ten seeds all
  // sit in the left part, so the first proposal must land in the right part.
  const std::size_t w = 32, h = 16;
  FeatureField field(w, h, 2);
  ClassMask gt(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const bool right = x >= 24;
      field.at(x, y)[right ? 1 : 0] = 1.0f;
      gt(x, y) = right ? 1 : 0;
    }
  }
  std::vector<PointLabel> seeds;
  for (std::size_t i = 0; i < 10; ++i) seeds.push_back({2 + 2 * i, 3 + (i % 3) * 4, 0});
  ScriptedExpert expert(gt, seeds);
  const HilConfig cfg{2.2, 50.0, 10, 12};
  const LabeledPointSet out = run_hil_session(field, expert, cfg);
  ASSERT_EQ(out.size(), 12u);
  ASSERT_EQ(expert.queried.size(), 2u);
  EXPECT_GE(expert.queried[0].x, 24u);

  std::vector<PointLabel> history(out.labels().begin(), out.labels().begin() + 10);
  for (std::size_t step = 0; step < 2; ++step) {
    const ScratchMaps s = scratch_maps(field, history, cfg);
    EXPECT_EQ(expert.queried[step], scan_argmax(s.m, history));
    history.push_back(out[10 + step]);
  }
}

TEST(Session, DeterministicAndNeverRepeats) {
  std::mt19937_64 rng(10);
  auto field = std::make_shared<const FeatureField>(oracle::random_field(12, 12, 4, rng));
  ClassMask gt(12, 12);
  for (auto& v : gt.values()) v = static_cast<std::uint8_t>(rng() % 3);
  const HilConfig cfg{2.2, 5.0, 3, 40};
  SimulatedExpert e1(gt), e2(gt);
  const auto a = run_hil_session(field, e1, cfg);
  const auto b = run_hil_session(field, e2, cfg);
  EXPECT_EQ(a.labels(), b.labels());
  ASSERT_EQ(a.size(), 40u);
  EXPECT_NO_THROW(validate_labels(a.labels()));
}

TEST(Session, ZeroMAtLabeledPixelsEveryIteration) {
  std::mt19937_64 rng(11);
  auto field = std::make_shared<const FeatureField>(oracle::random_field(10, 10, 5, rng));
  HilEngine engine(field, {2.2, 4.0, 1, 50});
  engine.add_label({5, 5, 0});
  for (int i = 0; i < 30; ++i) {
    for (const auto& l : engine.labels().labels()) ASSERT_NEAR(engine.state().combined()(l.x, l.y), 0.0, 1e-6);
    const Proposal p = engine.propose_next();
    ASSERT_FALSE(engine.labels().contains(p.x, p.y));
    engine.add_label({p.x, p.y, 1});
  }
}

TEST(Session, UnknownPolicy) {
  std::mt19937_64 rng(12);
  auto field = std::make_shared<const FeatureField>(oracle::random_field(8, 8, 3, rng));
  ClassMask gt(8, 8, kUnlabeled);
  gt(0, 0) = 2;
  const HilConfig cfg{2.2, 50.0, 1, 4};
  SimulatedExpert reserved(gt);
  const auto kept = run_hil_session(field, reserved, cfg, UnknownPolicy::LabelAsReserved);
  ASSERT_EQ(kept.size(), 4u);
  EXPECT_EQ(kept[0], (PointLabel{0, 0, 2}));
  for (std::size_t i = 1; i < 4; ++i) EXPECT_EQ(kept[i].class_id, kUnlabeled);

  // Every other pixel is unknown, so re-proposing exhausts the image.
  SimulatedExpert repropose(gt);
  const auto skipped = run_hil_session(field, repropose, cfg, UnknownPolicy::Repropose);
  EXPECT_EQ(skipped.size(), 1u);
  EXPECT_EQ(repropose.query_count(), 63u);
}

}  // namespace
}  // namespace pointprop
