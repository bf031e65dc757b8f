#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "pointprop/distance_transform.hpp"
#include "pointprop/error.hpp"
#include "pointprop/hil_proposal.hpp"
#include "pointprop/raster.hpp"

namespace pointprop {

/// One 4-connected region of equal, non-reserved class id.
struct Component {
  std::uint8_t class_id = 0;
  std::vector<Pixel> pixels;  // row-major order; pixels.front() is the min (y, x)
  std::size_t min_x = 0, min_y = 0, max_x = 0, max_y = 0;

  std::size_t area() const noexcept { return pixels.size(); }
};

/// Connected components of a class mask (4-connectivity, row-major discovery).
/// Pixels holding kUnlabeled belong to no component.
inline std::vector<Component> label_components(const ClassMask& mask) {
  const std::size_t w = mask.width();
  const std::size_t h = mask.height();
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> owner(w * h, kNone);
  std::vector<Component> components;
  std::vector<Pixel> stack;

  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::uint8_t cls = mask(x, y);
      if (cls == kUnlabeled || owner[y * w + x] != kNone) continue;
      const std::size_t id = components.size();
      Component& comp = components.emplace_back();
      comp.class_id = cls;
      comp.min_x = comp.max_x = x;
      comp.min_y = comp.max_y = y;
      owner[y * w + x] = id;
      stack.assign(1, Pixel{x, y});
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        comp.pixels.push_back(p);
        comp.min_x = std::min(comp.min_x, p.x);
        comp.max_x = std::max(comp.max_x, p.x);
        comp.min_y = std::min(comp.min_y, p.y);
        comp.max_y = std::max(comp.max_y, p.y);
        auto visit = [&](std::size_t nx, std::size_t ny) {
          if (mask(nx, ny) == cls && owner[ny * w + nx] == kNone) {
            owner[ny * w + nx] = id;
            stack.push_back({nx, ny});
          }
        };
        if (p.x > 0) visit(p.x - 1, p.y);
        if (p.x + 1 < w) visit(p.x + 1, p.y);
        if (p.y > 0) visit(p.x, p.y - 1);
        if (p.y + 1 < h) visit(p.x, p.y + 1);
      }
      std::sort(comp.pixels.begin(), comp.pixels.end(),
                [](const Pixel& a, const Pixel& b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
    }
  }
  return components;
}

/// Distance from each component pixel to the nearest pixel outside the
/// component (image border counts as outside), with `removed` pixels also
/// treated as outside. Returned raster covers the component's bounding box.
inline Map component_interior_distance(const Component& comp, const std::vector<Pixel>& removed = {}) {
  const std::size_t bw = comp.max_x - comp.min_x + 1;
  const std::size_t bh = comp.max_y - comp.min_y + 1;
  Raster<std::uint8_t> inside(bw, bh, 0);
  for (const Pixel& p : comp.pixels) inside(p.x - comp.min_x, p.y - comp.min_y) = 1;
  for (const Pixel& p : removed) {
    if (p.x >= comp.min_x && p.y >= comp.min_y && p.x - comp.min_x < bw && p.y - comp.min_y < bh) {
      inside(p.x - comp.min_x, p.y - comp.min_y) = 0;
    }
  }
  return interior_distance(inside);
}

/// Most interior pixel of a component (pole of inaccessibility), ignoring
/// `removed` pixels. Ties go to the smallest (y, x). Returns false when no
/// pixel remains.
inline bool component_center(const Component& comp, const std::vector<Pixel>& removed, Pixel& center) {
  const Map dist = component_interior_distance(comp, removed);
  double best = 0.0;
  bool found = false;
  for (const Pixel& p : comp.pixels) {
    const double d = dist(p.x - comp.min_x, p.y - comp.min_y);
    if (d > best) {
      best = d;
      center = p;
      found = true;
    }
  }
  return found;
}

/// Seed labels at the centers of the largest instances. Components are ranked
/// by area (descending, ties by discovery order); the first min(n, #components)
/// get their pole of inaccessibility. If there are fewer components than n, the
/// remaining picks cycle over the ranked components, each time taking the most
/// interior pixel once previously chosen pixels are treated as boundary.
inline std::vector<PointLabel> seed_points(const ClassMask& gt, std::size_t n) {
  if (n == 0) throw Error(Errc::InvalidConfig, "seed count must be >= 1");
  std::vector<Component> comps = label_components(gt);
  if (comps.empty()) throw Error(Errc::EmptyMask, "ground truth has no labeled pixel");
  std::stable_sort(comps.begin(), comps.end(),
                   [](const Component& a, const Component& b) { return a.area() > b.area(); });

  std::vector<PointLabel> seeds;
  std::vector<std::vector<Pixel>> chosen(comps.size());
  std::vector<bool> exhausted(comps.size(), false);
  std::size_t remaining = comps.size();
  for (std::size_t round = 0; seeds.size() < n && remaining > 0; ++round) {
    for (std::size_t c = 0; c < comps.size() && seeds.size() < n; ++c) {
      if (exhausted[c]) continue;
      Pixel center;
      if (!component_center(comps[c], chosen[c], center)) {
        exhausted[c] = true;
        --remaining;
        continue;
      }
      chosen[c].push_back(center);
      seeds.push_back({center.x, center.y, comps[c].class_id});
    }
  }
  return seeds;
}

/// Answers queries from a ground-truth mask.
class SimulatedExpert final : public Expert {
 public:
  explicit SimulatedExpert(ClassMask gt) : gt_(std::move(gt)) {}

  std::vector<PointLabel> seed_points(std::size_t n) override { return pointprop::seed_points(gt_, n); }

  std::uint8_t query(std::size_t x, std::size_t y) override {
    ++queries_;
    return gt_.at(x, y);
  }

  const ClassMask& ground_truth() const noexcept { return gt_; }
  std::size_t query_count() const noexcept { return queries_; }

 private:
  ClassMask gt_;
  std::size_t queries_ = 0;
};

}  // namespace pointprop
