#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <unordered_set>
#include <vector>

#include "pointprop/error.hpp"
#include "pointprop/raster.hpp"

namespace pointprop {

/// n distinct pixels drawn uniformly without replacement. Uses std::mt19937_64
/// seeded with `seed` and Floyd's subset sampling; reproducible within a build.
inline std::vector<Pixel> random_points(std::size_t height, std::size_t width, std::size_t n, std::uint64_t seed) {
  const std::size_t total = height * width;
  if (n > total) throw Error(Errc::TooManyPoints, "more points requested than pixels");
  std::mt19937_64 rng(seed);
  std::unordered_set<std::size_t> taken;
  taken.reserve(n * 2);
  std::vector<Pixel> points;
  points.reserve(n);
  for (std::size_t j = total - n; j < total; ++j) {
    std::uniform_int_distribution<std::size_t> pick(0, j);
    std::size_t t = pick(rng);
    if (!taken.insert(t).second) {
      t = j;
      taken.insert(t);
    }
    points.push_back({t % width, t / width});
  }
  return points;
}

namespace detail {

inline std::size_t grid_coord(double position, std::size_t extent) {
  const long rounded = std::lround(position);
  return static_cast<std::size_t>(std::clamp<long>(rounded, 0, static_cast<long>(extent) - 1));
}

}  // namespace detail

/// Evenly spaced layout of n points. Rows are r = round(sqrt(n)), columns
/// c = ceil(n / r), point (i, j) sits at ((j + 0.5) w / c, (i + 0.5) h / r);
/// a short last row is centered. Five points form a 2x2 grid plus the image
/// center; ten points form rows of 3, 4, 3.
inline std::vector<Pixel> grid_points(std::size_t height, std::size_t width, std::size_t n) {
  if (n == 0) throw Error(Errc::InvalidConfig, "grid needs at least one point");
  if (n > height * width) throw Error(Errc::TooManyPoints, "more points requested than pixels");
  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);
  std::vector<Pixel> points;
  auto emit = [&](double fx, double fy) {
    const Pixel p{detail::grid_coord(fx * w, width), detail::grid_coord(fy * h, height)};
    if (std::find(points.begin(), points.end(), p) == points.end()) points.push_back(p);
  };

  if (n == 5) {
    for (double fy : {0.25, 0.75}) {
      for (double fx : {0.25, 0.75}) emit(fx, fy);
    }
    emit(0.5, 0.5);
    return points;
  }
  if (n == 10) {
    const std::size_t per_row[3] = {3, 4, 3};
    for (std::size_t i = 0; i < 3; ++i) {
      const double fy = (2.0 * static_cast<double>(i) + 1.0) / 6.0;
      for (std::size_t j = 0; j < per_row[i]; ++j) {
        emit((static_cast<double>(j) + 0.5) / static_cast<double>(per_row[i]), fy);
      }
    }
    return points;
  }

  const auto rows = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
  const std::size_t cols = (n + rows - 1) / rows;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t in_row = i + 1 < rows ? cols : n - (rows - 1) * cols;
    const double offset = static_cast<double>(cols - in_row) / 2.0;
    const double fy = (static_cast<double>(i) + 0.5) / static_cast<double>(rows);
    for (std::size_t j = 0; j < in_row; ++j) {
      emit((static_cast<double>(j) + 0.5 + offset) / static_cast<double>(cols), fy);
    }
  }
  return points;
}

}  // namespace pointprop
