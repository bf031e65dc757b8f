#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pointprop/error.hpp"

namespace pointprop {

/// Class id reserved for "unlabeled / unknown" pixels.
inline constexpr std::uint8_t kUnlabeled = 255;

/// Pixel coordinate; x is the column, y is the row.
struct Pixel {
  std::size_t x = 0;
  std::size_t y = 0;

  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// A single annotated pixel.
struct PointLabel {
  std::size_t x = 0;
  std::size_t y = 0;
  std::uint8_t class_id = 0;

  Pixel pixel() const noexcept { return {x, y}; }
  friend bool operator==(const PointLabel&, const PointLabel&) = default;
};

/// Row-major 2D grid of values.
template <class T>
class Raster {
 public:
  Raster() = default;
  Raster(std::size_t width, std::size_t height, T fill = T{})
      : width_(width), height_(height), data_(width * height, fill) {}

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(std::size_t x, std::size_t y) const noexcept { return x < width_ && y < height_; }

  T& operator()(std::size_t x, std::size_t y) noexcept { return data_[y * width_ + x]; }
  const T& operator()(std::size_t x, std::size_t y) const noexcept { return data_[y * width_ + x]; }

  T& at(std::size_t x, std::size_t y) {
    if (!contains(x, y)) throw Error(Errc::OutOfBounds, "pixel outside raster");
    return (*this)(x, y);
  }
  const T& at(std::size_t x, std::size_t y) const {
    if (!contains(x, y)) throw Error(Errc::OutOfBounds, "pixel outside raster");
    return (*this)(x, y);
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool same_shape(const Raster& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<T> data_;
};

/// Dense per-pixel class-id raster (ground truth, augmented masks, predictions).
using ClassMask = Raster<std::uint8_t>;
/// Scalar per-pixel map.
using Map = Raster<double>;

/// Throws ClassIdOutOfRange unless every pixel is kUnlabeled or < class_count.
inline void validate_mask(const ClassMask& mask, std::size_t class_count) {
  for (std::uint8_t id : mask.values()) {
    if (id != kUnlabeled && id >= class_count) {
      throw Error(Errc::ClassIdOutOfRange, "class id " + std::to_string(id) + " >= class count " +
                                               std::to_string(class_count));
    }
  }
}

}  // namespace pointprop
