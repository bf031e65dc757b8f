#include "pointprop/knn_propagation.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "oracles.hpp"

namespace pointprop {
namespace {

FeatureField prototype_field() {
  // Left half is e0, right half is e1.
  FeatureField field(4, 4, 2);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) field.at(x, y)[x < 2 ? 0 : 1] = 1.0f;
  }
  return field;
}

TEST(Propagate, SingleLabelFillsMask) {
  std::mt19937_64 rng(1);
  const FeatureField field = oracle::random_field(9, 7, 5, rng);
  const ClassMask mask = propagate(field, make_label_set(field, std::vector<PointLabel>{{3, 2, 17}}));
  for (auto v : mask.values()) EXPECT_EQ(v, 17);
}

TEST(Propagate, OrthogonalPrototypes) {
  const FeatureField field = prototype_field();
  const std::vector<PointLabel> labels = {{0, 0, 4}, {3, 3, 9}};
  const ClassMask mask = propagate(field, make_label_set(field, labels));
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(mask(x, y), x < 2 ? 4 : 9);
  }
  EXPECT_EQ(mask, oracle::nearest_label_mask(field, labels));
}

TEST(Propagate, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(42);
  const FeatureField field = oracle::random_field(32, 32, 8, rng);
  const auto labels = oracle::random_labels(32, 32, 25, 6, rng);
  EXPECT_EQ(propagate(field, make_label_set(field, labels)), oracle::nearest_label_mask(field, labels));
}

TEST(Propagate, BlockSizeDoesNotMatter) {
  std::mt19937_64 rng(43);
  const FeatureField field = oracle::random_field(20, 23, 6, rng);
  const auto set = make_label_set(field, oracle::random_labels(20, 23, 9, 4, rng));
  const ClassMask ref = propagate(field, set, {1, 64});
  for (std::size_t block : {1u, 3u, 7u, 1000u}) EXPECT_EQ(propagate(field, set, {1, block}), ref);
  const ClassMask ref3 = propagate(field, set, {3, 64});
  EXPECT_EQ(propagate(field, set, {3, 5}), ref3);
}

TEST(Propagate, TieGoesToEarlierLabel) {
  // Every pixel is identical, so all similarities tie.
  FeatureField field(3, 3, 2);
  for (std::size_t i = 0; i < field.pixel_count(); ++i) field.pixel(i)[0] = 1.0f;
  const ClassMask mask = propagate(field, make_label_set(field, std::vector<PointLabel>{{2, 2, 5}, {0, 0, 6}}));
  EXPECT_EQ(mask(1, 1), 5);
  EXPECT_EQ(mask(0, 0), 6);  // labeled pixels keep their class
  EXPECT_EQ(mask(2, 2), 5);
}

TEST(Propagate, MajorityVoteWithK3) {
  // Pixel (0,0) is closest to the class-1 label but the two class-2 labels
  // outvote it at k = 3.
  FeatureField field(4, 1, 2);
  auto set = [&](std::size_t x, float a, float b) {
    const double n = std::sqrt(double(a) * a + double(b) * b);
    field.at(x, 0)[0] = float(a / n);
    field.at(x, 0)[1] = float(b / n);
  };
  set(0, 1.0f, 0.0f);
  set(1, 1.0f, 0.1f);
  set(2, 1.0f, 0.3f);
  set(3, 1.0f, 0.35f);
  const auto labels = make_label_set(field, std::vector<PointLabel>{{1, 0, 1}, {2, 0, 2}, {3, 0, 2}});
  EXPECT_EQ(propagate(field, labels, {1})(0, 0), 1);
  EXPECT_EQ(propagate(field, labels, {3})(0, 0), 2);
}

TEST(Propagate, MajorityTieFallsBackToNearest) {
  // k = 2 with two classes: every vote ties 1-1, so the nearest label decides
  // and the result equals k = 1.
  std::mt19937_64 rng(8);
  const FeatureField field = oracle::random_field(12, 12, 6, rng);
  const auto labels = make_label_set(field, std::vector<PointLabel>{{1, 1, 0}, {10, 10, 1}});
  EXPECT_EQ(propagate(field, labels, {2}), propagate(field, labels, {1}));
}

TEST(Propagate, Errors) {
  std::mt19937_64 rng(2);
  const FeatureField field = oracle::random_field(4, 4, 3, rng);
  LabeledPointSet empty(3);
  try {
    propagate(field, empty);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyLabelSet);
  }
  const auto one = make_label_set(field, std::vector<PointLabel>{{0, 0, 1}});
  EXPECT_THROW(propagate(field, one, {2}), Error);
  EXPECT_THROW(propagate(field, one, {0}), Error);
}

TEST(Propagate, ReservedAndDegenerateLabelsAreNotNeighbors) {
  std::mt19937_64 rng(4);
  FeatureField field = oracle::random_field(6, 6, 4, rng);
  std::fill(field.at(5, 5).begin(), field.at(5, 5).end(), 0.0f);
  field.set_degenerate(5 * 6 + 5, true);
  const auto labels =
      make_label_set(field, std::vector<PointLabel>{{0, 0, 3}, {2, 2, kUnlabeled}, {5, 5, 7}});
  const ClassMask mask = propagate(field, labels);
  EXPECT_EQ(mask(2, 2), kUnlabeled);
  EXPECT_EQ(mask(5, 5), 7);
  for (std::size_t y = 0; y < 6; ++y) {
    for (std::size_t x = 0; x < 6; ++x) {
      if ((x == 2 && y == 2) || (x == 5 && y == 5)) continue;
      EXPECT_EQ(mask(x, y), 3);
    }
  }
}

TEST(Propagate, OnlyLabelClassesAppear) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureField field = oracle::random_field(16, 16, 5, rng);
    const auto labels = oracle::random_labels(16, 16, 7, 30, rng);
    std::set<std::uint8_t> classes;
    for (const auto& l : labels) classes.insert(l.class_id);
    for (std::size_t k : {1u, 3u}) {
      const ClassMask mask = propagate(field, make_label_set(field, labels), {k});
      for (auto v : mask.values()) EXPECT_TRUE(classes.count(v));
    }
  }
}

TEST(Propagate, OrderInvarianceForDistinctSimilarities) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureField field = oracle::random_field(16, 16, 8, rng);
    auto labels = oracle::random_labels(16, 16, 10, 5, rng);
    const ClassMask ref = propagate(field, make_label_set(field, labels));
    std::shuffle(labels.begin(), labels.end(), rng);
    EXPECT_EQ(propagate(field, make_label_set(field, labels)), ref);
  }
}

TEST(Propagate, DuplicateLabelIsNoOp) {
  std::mt19937_64 rng(78);
  const FeatureField field = oracle::random_field(10, 10, 4, rng);
  const auto labels = oracle::random_labels(10, 10, 4, 3, rng);
  auto set = make_label_set(field, labels);
  const ClassMask ref = propagate(field, set);
  EXPECT_FALSE(set.add(field, labels[2]));
  EXPECT_EQ(set.size(), labels.size());
  EXPECT_EQ(propagate(field, set), ref);
  PointLabel conflicting = labels[2];
  conflicting.class_id = static_cast<std::uint8_t>(conflicting.class_id + 1);
  EXPECT_THROW(set.add(field, conflicting), Error);
}

TEST(Similarity, Accessor) {
  std::mt19937_64 rng(90);
  const FeatureField field = oracle::random_field(11, 9, 7, rng);
  const auto labels = oracle::random_labels(11, 9, 6, 3, rng);
  const auto set = make_label_set(field, labels);
  const LabelSimilarity sim(field, set);
  for (std::size_t l = 0; l < labels.size(); ++l) EXPECT_NEAR(sim(labels[l].x, labels[l].y, l), 1.0, 1e-6);

  std::uniform_int_distribution<std::size_t> px(0, 10), py(0, 8), pl(0, 5);
  for (int i = 0; i < 10; ++i) {
    const std::size_t x = px(rng), y = py(rng), l = pl(rng);
    const double expected = oracle::dot(field.at(x, y).data(), field.at(labels[l].x, labels[l].y).data(), 7);
    EXPECT_NEAR(sim(x, y, l), expected, 1e-12);
  }
  EXPECT_THROW(sim(11, 0, 0), Error);
  EXPECT_THROW(sim(0, 0, 6), Error);
}

TEST(Similarity, SwappedPrototypesMirrorRows) {
  const FeatureField field = prototype_field();
  const auto set = make_label_set(field, std::vector<PointLabel>{{0, 0, 0}, {3, 0, 1}});
  const LabelSimilarity sim(field, set);
  const auto left = sim.row(1, 2);
  const auto right = sim.row(2, 2);
  EXPECT_EQ(left[0], right[1]);
  EXPECT_EQ(left[1], right[0]);
}

}  // namespace
}  // namespace pointprop
