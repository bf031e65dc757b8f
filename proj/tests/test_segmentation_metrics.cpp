#include "pointprop/segmentation_metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

namespace pointprop {
namespace {

const ClassSet kIgnoreReserved = make_class_set({kUnlabeled});

ClassMask from_rows(std::initializer_list<std::initializer_list<int>> rows) {
  const std::size_t h = rows.size();
  const std::size_t w = rows.begin()->size();
  ClassMask m(w, h);
  std::size_t y = 0;
  for (const auto& row : rows) {
    std::size_t x = 0;
    for (int v : row) m(x++, y) = static_cast<std::uint8_t>(v);
    ++y;
  }
  return m;
}

ClassMask random_mask(std::mt19937_64& rng, std::size_t w, std::size_t h, std::size_t classes) {
  ClassMask m(w, h);
  for (auto& v : m.values()) v = static_cast<std::uint8_t>(rng() % classes);
  return m;
}

TEST(Metrics, HandComputedExample) {
  const ClassMask gt = from_rows({{0, 0}, {1, 1}});
  const ClassMask pred = from_rows({{0, 1}, {1, 1}});
  const ConfusionMatrix cm = confusion_matrix(gt, pred, kIgnoreReserved, 2);
  EXPECT_NEAR(pixel_accuracy(cm), 0.75, 1e-6);
  EXPECT_NEAR(mean_pixel_accuracy(cm), 0.75, 1e-6);
  EXPECT_NEAR(mean_iou(cm), (0.5 + 2.0 / 3.0) / 2.0, 1e-6);
  EXPECT_NEAR(mean_iou(cm), 0.58333, 1e-5);
}

TEST(Metrics, PerfectPredictionIsDiagonal) {
  std::mt19937_64 rng(1);
  const ClassMask gt = random_mask(rng, 9, 9, 4);
  const ConfusionMatrix cm = confusion_matrix(gt, gt, kIgnoreReserved, 4);
  for (std::size_t g = 0; g < 4; ++g) {
    for (std::size_t p = 0; p < 4; ++p) {
      if (g != p) {
        EXPECT_EQ(cm.count(g, p), 0u);
      }
    }
  }
  const Metrics m = compute_metrics(cm);
  EXPECT_EQ(m.pa, 1.0);
  EXPECT_EQ(m.mpa, 1.0);
  EXPECT_EQ(m.miou, 1.0);
}

TEST(Metrics, AbsentClassAffectsIouOnly) {
  // Class 2 never appears in gt but is predicted once.
  const ClassMask gt = from_rows({{0, 0}, {1, 1}});
  const ClassMask pred = from_rows({{0, 2}, {1, 1}});
  const ConfusionMatrix cm = confusion_matrix(gt, pred, kIgnoreReserved, 3);
  EXPECT_NEAR(mean_pixel_accuracy(cm), (0.5 + 1.0) / 2.0, 1e-12);
  EXPECT_NEAR(mean_iou(cm), (0.5 + 1.0 + 0.0) / 3.0, 1e-12);
  EXPECT_FALSE(class_accuracy(cm, 2).has_value());
  EXPECT_EQ(class_iou(cm, 2).value(), 0.0);
}

TEST(Metrics, AllIgnoredIsEmpty) {
  const ClassMask gt(3, 3, kUnlabeled);
  const ConfusionMatrix cm = confusion_matrix(gt, ClassMask(3, 3, 0), kIgnoreReserved, 2);
  EXPECT_TRUE(cm.empty());
  EXPECT_EQ(cm.ignored(), 9u);
  try {
    pixel_accuracy(cm);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyMatrix);
  }
  EXPECT_THROW(mean_iou(cm), Error);
}

TEST(Metrics, Errors) {
  EXPECT_THROW(confusion_matrix(ClassMask(2, 2), ClassMask(2, 3), kIgnoreReserved, 2), Error);
  ClassMask gt(2, 2, 0);
  gt(0, 0) = 5;
  try {
    confusion_matrix(gt, ClassMask(2, 2, 0), kIgnoreReserved, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ClassIdOutOfRange);
  }
  // Reserved gt is out of range unless ignored.
  EXPECT_THROW(confusion_matrix(ClassMask(2, 2, kUnlabeled), ClassMask(2, 2, 0), ClassSet{}, 2), Error);
}

TEST(Metrics, IgnoreListAndUnassignedPredictions) {
  const ClassMask gt = from_rows({{0, 3}, {1, 255}});
  const ClassMask pred = from_rows({{255, 0}, {1, 1}});
  const ConfusionMatrix cm = confusion_matrix(gt, pred, make_class_set({kUnlabeled, 3}), 4);
  EXPECT_EQ(cm.ignored(), 2u);
  EXPECT_EQ(cm.total(), 2u);
  EXPECT_EQ(cm.unassigned(0), 1u);
  EXPECT_EQ(cm.total() + cm.ignored(), gt.size());
  EXPECT_NEAR(pixel_accuracy(cm), 0.5, 1e-12);
  EXPECT_EQ(class_accuracy(cm, 0).value(), 0.0);
}

TEST(Metrics, MatchesDirectTally) {
  std::mt19937_64 rng(2);
  const ClassMask gt = random_mask(rng, 8, 8, 5);
  const ClassMask pred = random_mask(rng, 8, 8, 5);
  const ConfusionMatrix cm = confusion_matrix(gt, pred, kIgnoreReserved, 5);
  for (std::size_t g = 0; g < 5; ++g) {
    for (std::size_t p = 0; p < 5; ++p) {
      std::uint64_t n = 0;
      for (std::size_t i = 0; i < gt.size(); ++i) n += gt.storage()[i] == g && pred.storage()[i] == p;
      EXPECT_EQ(cm.count(g, p), n);
    }
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) correct += gt.storage()[i] == pred.storage()[i];
  EXPECT_DOUBLE_EQ(pixel_accuracy(cm), double(correct) / 64.0);
}

TEST(Metrics, PermutationInvariant) {
  std::mt19937_64 rng(3);
  std::vector<std::uint8_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 20; ++trial) {
    const ClassMask gt = random_mask(rng, 10, 10, 6);
    const ClassMask pred = random_mask(rng, 10, 10, 6);
    std::shuffle(perm.begin(), perm.end(), rng);
    ClassMask gt2 = gt, pred2 = pred;
    for (auto& v : gt2.values()) v = perm[v];
    for (auto& v : pred2.values()) v = perm[v];
    const Metrics a = compute_metrics(confusion_matrix(gt, pred, kIgnoreReserved, 6));
    const Metrics b = compute_metrics(confusion_matrix(gt2, pred2, kIgnoreReserved, 6));
    EXPECT_NEAR(a.pa, b.pa, 1e-12);
    EXPECT_NEAR(a.mpa, b.mpa, 1e-12);
    EXPECT_NEAR(a.miou, b.miou, 1e-12);
  }
}

TEST(Metrics, MergeIsAdditive) {
  std::mt19937_64 rng(4);
  ConfusionMatrix summed(4);
  ClassMask big_gt(6, 18), big_pred(6, 18);
  for (std::size_t part = 0; part < 3; ++part) {
    const ClassMask gt = random_mask(rng, 6, 6, 4);
    const ClassMask pred = random_mask(rng, 6, 6, 4);
    summed.merge(confusion_matrix(gt, pred, kIgnoreReserved, 4));
    for (std::size_t y = 0; y < 6; ++y) {
      for (std::size_t x = 0; x < 6; ++x) {
        big_gt(x, part * 6 + y) = gt(x, y);
        big_pred(x, part * 6 + y) = pred(x, y);
      }
    }
  }
  EXPECT_EQ(summed, confusion_matrix(big_gt, big_pred, kIgnoreReserved, 4));
  const ConfusionMatrix other = confusion_matrix(random_mask(rng, 6, 6, 4), random_mask(rng, 6, 6, 4),
                                                kIgnoreReserved, 4);
  ConfusionMatrix ab = summed, ba = other;
  ab.merge(other);
  ba.merge(summed);
  EXPECT_EQ(ab, ba);
  EXPECT_THROW(ab.merge(ConfusionMatrix(5)), Error);
}

TEST(Metrics, MiouNotAboveMpaOnRandomMatrices) {
  // Exploratory relation over gt-present classes; holds for every random case tried.
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t classes = 2 + rng() % 6;
    const ClassMask gt = random_mask(rng, 7, 7, classes);
    const ClassMask pred = random_mask(rng, 7, 7, classes);
    const ConfusionMatrix cm = confusion_matrix(gt, pred, kIgnoreReserved, classes);
    double iou_sum = 0.0, acc_sum = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (auto acc = class_accuracy(cm, c)) {
        acc_sum += *acc;
        iou_sum += class_iou(cm, c).value();
        ++n;
      }
    }
    EXPECT_LE(iou_sum / n, acc_sum / n + 1e-12);
  }
}

}  // namespace
}  // namespace pointprop
