#include "pointprop/synthetic.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pointprop/embedding_field.hpp"
#include "pointprop/knn_propagation.hpp"
#include "pointprop/segmentation_metrics.hpp"
#include "pointprop/simulated_expert.hpp"

namespace pointprop {
namespace {

TEST(Synthetic, NoiselessPixelsEqualPrototypes) {
  SyntheticParams params;
  params.noise = 0.0;
  const SyntheticScene scene = generate_scene(params, 7);
  ASSERT_EQ(scene.features.shape, (std::vector<std::uint32_t>{64, 64, 16}));
  for (std::size_t y = 0; y < 64; ++y) {
    for (std::size_t x = 0; x < 64; ++x) {
      const auto& proto = scene.prototypes[scene.mask(x, y)];
      for (std::uint32_t c = 0; c < 16; ++c) {
        ASSERT_NEAR(scene.features.at({uint32_t(y), uint32_t(x), c}), proto[c], 1e-6f);
      }
    }
  }
}

TEST(Synthetic, EveryClassPresent) {
  SyntheticParams params;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SyntheticScene scene = generate_scene(params, seed);
    std::vector<bool> seen(params.classes, false);
    for (auto v : scene.mask.values()) {
      ASSERT_LT(v, params.classes);
      seen[v] = true;
    }
    // The first blobs cover each class, but a small site can be swallowed by its neighbours.
    std::size_t present = 0;
    for (bool s : seen) present += s;
    EXPECT_GE(present, 2u);
  }
}

TEST(Synthetic, SameSeedSameBytes) {
  const auto a = oracle::temp_dir("synth_a");
  const auto b = oracle::temp_dir("synth_b");
  SyntheticParams params;
  params.width = 24;
  params.height = 20;
  generate_synthetic(a, params, 3, 11);
  const auto stems = generate_synthetic(b, params, 3, 11);
  ASSERT_EQ(stems, (std::vector<std::string>{"scene_0000", "scene_0001", "scene_0002"}));
  for (const auto& stem : stems) {
    for (const auto& rel : {"features/" + stem + ".ftns", "masks/" + stem + ".png", "images/" + stem + ".png"}) {
      EXPECT_EQ(detail::read_file(a / rel), detail::read_file(b / rel)) << rel;
    }
  }
  EXPECT_NE(detail::read_file(a / "features/scene_0000.ftns"), detail::read_file(a / "features/scene_0001.ftns"));
  EXPECT_EQ(read_mask(a / "masks/scene_0001.png"), generate_scene(params, scene_seed(11, 1)).mask);
}

TEST(Synthetic, NoiseSweepDegradesPropagation) {
  // Mean mIoU of seed-point propagation over 20 scenes, per noise level.
  std::vector<double> scores;
  for (double noise : {0.0, 0.2, 0.5}) {
    SyntheticParams params;
    params.noise = noise;
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const SyntheticScene scene = generate_scene(params, seed);
      const FeatureField field = field_from_tensor(scene.features);
      const auto labels = seed_points(scene.mask, 10);
      const ClassMask pred = propagate(field, make_label_set(field, labels));
      total += mean_iou(confusion_matrix(scene.mask, pred, make_class_set({kUnlabeled}), params.classes));
    }
    scores.push_back(total / 20.0);
  }
  for (std::size_t i = 1; i < scores.size(); ++i) EXPECT_LT(scores[i], scores[i - 1]) << "noise step " << i;
}

TEST(Synthetic, Validation) {
  SyntheticParams params;
  params.classes = 1;
  EXPECT_THROW(generate_scene(params, 0), Error);
  params = {};
  params.instance_share = 1.5;
  EXPECT_THROW(generate_scene(params, 0), Error);
  EXPECT_EQ(scene_stem(7), "scene_0007");
  EXPECT_EQ(scene_stem(12345), "scene_12345");
}

}  // namespace
}  // namespace pointprop
