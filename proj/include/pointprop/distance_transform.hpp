#pragma once

// Exact Euclidean distance transform (Felzenszwalb & Huttenlocher lower-envelope
// method): one 1D pass along rows, one along columns, O(HW) overall.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "pointprop/error.hpp"
#include "pointprop/raster.hpp"

namespace pointprop {

namespace detail {

inline constexpr double kEdtInfinity = 1e20;

// Squared distance transform of a sampled function f, written to d.
inline void squared_edt_1d(std::span<const double> f, std::span<double> d, std::vector<std::size_t>& v,
                           std::vector<double>& z) {
  const std::size_t n = f.size();
  v.resize(n);
  z.resize(n + 1);
  std::size_t k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  auto intersect = [&](std::size_t q, std::size_t r) {
    const double dq = static_cast<double>(q);
    const double dr = static_cast<double>(r);
    return ((f[q] + dq * dq) - (f[r] + dr * dr)) / (2.0 * dq - 2.0 * dr);
  };
  for (std::size_t q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double diff = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = diff * diff + f[v[k]];
  }
}

}  // namespace detail

/// Squared Euclidean distance from every pixel to the nearest pixel where
/// `is_feature` is nonzero. Pixels with no feature anywhere get kEdtInfinity.
inline Map squared_distance_transform(const Raster<std::uint8_t>& is_feature) {
  const std::size_t w = is_feature.width();
  const std::size_t h = is_feature.height();
  Map out(w, h);
  std::vector<double> f(std::max(w, h));
  std::vector<double> d(std::max(w, h));
  std::vector<std::size_t> v;
  std::vector<double> z;

  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) f[y] = is_feature(x, y) != 0 ? 0.0 : detail::kEdtInfinity;
    detail::squared_edt_1d(std::span(f.data(), h), std::span(d.data(), h), v, z);
    for (std::size_t y = 0; y < h; ++y) out(x, y) = d[y];
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) f[x] = out(x, y);
    detail::squared_edt_1d(std::span(f.data(), w), std::span(d.data(), w), v, z);
    for (std::size_t x = 0; x < w; ++x) out(x, y) = std::min(d[x], detail::kEdtInfinity);
  }
  return out;
}

/// D(x, y): Euclidean distance in pixels to the nearest labeled coordinate.
inline Map distance_map(std::span<const Pixel> labeled, std::size_t height, std::size_t width) {
  if (labeled.empty()) throw Error(Errc::EmptyLabelSet, "distance map needs at least one labeled pixel");
  Raster<std::uint8_t> seeds(width, height, 0);
  for (const Pixel& p : labeled) seeds.at(p.x, p.y) = 1;
  Map dist = squared_distance_transform(seeds);
  for (double& value : dist.values()) value = std::sqrt(value);
  return dist;
}

/// Euclidean distance from each pixel of `inside` to the nearest pixel that is
/// not inside, where everything beyond the raster border counts as outside.
/// Pixels not inside get 0.
inline Map interior_distance(const Raster<std::uint8_t>& inside) {
  const std::size_t w = inside.width();
  const std::size_t h = inside.height();
  Raster<std::uint8_t> outside(w + 2, h + 2, 1);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) outside(x + 1, y + 1) = inside(x, y) != 0 ? 0 : 1;
  }
  const Map padded = squared_distance_transform(outside);
  Map dist(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) dist(x, y) = std::sqrt(padded(x + 1, y + 1));
  }
  return dist;
}

}  // namespace pointprop
