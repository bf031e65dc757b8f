#pragma once

// Desk-scale stand-in for extractor features over a labeled image: random
// blob layouts with one prototype embedding per class, perturbed per instance
// and per pixel.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pointprop/error.hpp"
#include "pointprop/raster.hpp"
#include "pointprop/tensor_io.hpp"

namespace pointprop {

struct SyntheticParams {
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t classes = 6;
  std::size_t blobs = 14;
  std::size_t dim = 16;
  /// Per-component standard deviation of the gaussian perturbation added to
  /// the unit class prototype.
  double noise = 0.3;
  /// Fraction of the perturbation variance shared by all pixels of one blob.
  double instance_share = 0.5;

  void validate() const {
    if (classes < 2 || classes > 254) throw Error(Errc::InvalidConfig, "class count must be in [2, 254]");
    if (dim < 2) throw Error(Errc::InvalidConfig, "dimension must be >= 2");
    if (width == 0 || height == 0) throw Error(Errc::InvalidConfig, "scene size must be positive");
    if (blobs == 0) throw Error(Errc::InvalidConfig, "need at least one blob");
    if (!(noise >= 0.0)) throw Error(Errc::InvalidConfig, "noise must be >= 0");
    if (!(instance_share >= 0.0 && instance_share <= 1.0)) {
      throw Error(Errc::InvalidConfig, "instance_share must be in [0, 1]");
    }
  }
};

struct SyntheticScene {
  Tensor features;  // [height, width, dim], unit vectors per pixel
  ClassMask mask;
  std::vector<std::vector<float>> prototypes;  // one unit vector per class
};

/// SplitMix64 step, used to derive independent per-scene seeds.
inline std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline SyntheticScene generate_scene(const SyntheticParams& params, std::uint64_t seed) {
  params.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t w = params.width;
  const std::size_t h = params.height;
  const std::size_t dim = params.dim;

  auto random_unit = [&] {
    std::vector<double> v(dim);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& x : v) {
        x = normal(rng);
        norm += x * x;
      }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
  };

  SyntheticScene scene;
  std::vector<std::vector<double>> protos(params.classes);
  for (auto& p : protos) p = random_unit();

  // Blob layout: a power diagram over random sites with random weights, with
  // a smooth sinusoidal warp of the sampling position so borders curve.
  struct Site {
    double x, y, weight;
    std::uint8_t cls;
    std::vector<double> offset;
  };
  std::vector<Site> sites(params.blobs);
  const double scale = static_cast<double>(std::max(w, h));
  for (std::size_t b = 0; b < sites.size(); ++b) {
    Site& s = sites[b];
    s.x = unit(rng) * static_cast<double>(w);
    s.y = unit(rng) * static_cast<double>(h);
    const double r = scale * (0.05 + 0.25 * unit(rng) * unit(rng));
    s.weight = r * r;
    s.cls = static_cast<std::uint8_t>(b < params.classes ? b : static_cast<std::size_t>(unit(rng) * params.classes));
    s.offset.resize(dim);
    for (double& x : s.offset) x = normal(rng);
  }
  const double amp = 0.04 * scale;
  const double fx = 2.0 * 3.14159265358979323846 * (1.0 + 2.0 * unit(rng)) / scale;
  const double fy = 2.0 * 3.14159265358979323846 * (1.0 + 2.0 * unit(rng)) / scale;
  const double px = 6.283185307179586 * unit(rng);
  const double py = 6.283185307179586 * unit(rng);

  scene.mask = ClassMask(w, h);
  std::vector<std::size_t> owner(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double sx = static_cast<double>(x) + amp * std::sin(fy * static_cast<double>(y) + py);
      const double sy = static_cast<double>(y) + amp * std::sin(fx * static_cast<double>(x) + px);
      std::size_t best = 0;
      double best_d = 0.0;
      for (std::size_t b = 0; b < sites.size(); ++b) {
        const double dx = sx - sites[b].x;
        const double dy = sy - sites[b].y;
        const double d = dx * dx + dy * dy - sites[b].weight;
        if (b == 0 || d < best_d) {
          best_d = d;
          best = b;
        }
      }
      owner[y * w + x] = best;
      scene.mask(x, y) = sites[best].cls;
    }
  }

  const double shared = params.noise * std::sqrt(params.instance_share);
  const double local = params.noise * std::sqrt(1.0 - params.instance_share);
  scene.features.shape = {static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w),
                          static_cast<std::uint32_t>(dim)};
  scene.features.data.resize(w * h * dim);
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < w * h; ++i) {
    const Site& site = sites[owner[i]];
    const std::vector<double>& proto = protos[site.cls];
    double norm = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      double value = proto[c];
      if (params.noise > 0.0) value += shared * site.offset[c] + local * normal(rng);
      v[c] = value;
      norm += value * value;
    }
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < dim; ++c) {
      scene.features.data[i * dim + c] = static_cast<float>(norm > 1e-12 ? v[c] / norm : 0.0);
    }
  }
  for (const auto& p : protos) scene.prototypes.emplace_back(p.begin(), p.end());
  return scene;
}

/// Deterministic display color for a class id.
inline std::array<std::uint8_t, 3> class_color(std::uint8_t id) {
  if (id == kUnlabeled) return {0, 0, 0};
  const std::uint64_t hash = mix_seed(id);
  return {static_cast<std::uint8_t>(64 + (hash & 0xbf)), static_cast<std::uint8_t>(64 + ((hash >> 8) & 0xbf)),
          static_cast<std::uint8_t>(64 + ((hash >> 16) & 0xbf))};
}

inline std::vector<std::uint8_t> render_mask_rgb(const ClassMask& mask) {
  std::vector<std::uint8_t> rgb(mask.size() * 3);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const auto color = class_color(mask.storage()[i]);
    std::copy(color.begin(), color.end(), rgb.begin() + static_cast<std::ptrdiff_t>(i * 3));
  }
  return rgb;
}

inline std::string scene_stem(std::size_t index) {
  std::string digits = std::to_string(index);
  return "scene_" + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
}

inline std::uint64_t scene_seed(std::uint64_t seed, std::size_t index) { return mix_seed(seed ^ mix_seed(index)); }

/// Writes <root>/{images,features,masks}/scene_NNNN.{png,ftns,png}. Returns the stems.
inline std::vector<std::string> generate_synthetic(const std::filesystem::path& root, const SyntheticParams& params,
                                                   std::size_t scenes, std::uint64_t seed) {
  params.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"images", "features", "masks"}) {
    fs::create_directories(root / sub, ec);
    if (ec) throw Error(Errc::IoFailure, "cannot create " + (root / sub).string());
  }
  std::vector<std::string> stems;
  for (std::size_t i = 0; i < scenes; ++i) {
    const SyntheticScene scene = generate_scene(params, scene_seed(seed, i));
    const std::string stem = scene_stem(i);
    write_tensor(scene.features, root / "features" / (stem + ".ftns"));
    write_mask(scene.mask, root / "masks" / (stem + ".png"));
    const std::vector<std::uint8_t> preview =
        encode_rgb_png(render_mask_rgb(scene.mask), scene.mask.width(), scene.mask.height());
    detail::write_file(root / "images" / (stem + ".png"), preview);
    stems.push_back(stem);
  }
  return stems;
}

}  // namespace pointprop
