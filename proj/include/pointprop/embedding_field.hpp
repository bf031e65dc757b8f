#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pointprop/error.hpp"
#include "pointprop/parallel.hpp"
#include "pointprop/tensor_io.hpp"

namespace pointprop {

/// Per-pixel embedding vectors stored row-major, channels contiguous.
class FeatureField {
 public:
  FeatureField() = default;
  FeatureField(std::size_t width, std::size_t height, std::size_t dim)
      : width_(width), height_(height), dim_(dim), data_(width * height * dim, 0.0f),
        degenerate_(width * height, 0) {}

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t pixel_count() const noexcept { return width_ * height_; }

  std::span<float> pixel(std::size_t index) noexcept { return {data_.data() + index * dim_, dim_}; }
  std::span<const float> pixel(std::size_t index) const noexcept { return {data_.data() + index * dim_, dim_}; }
  std::span<float> at(std::size_t x, std::size_t y) noexcept { return pixel(y * width_ + x); }
  std::span<const float> at(std::size_t x, std::size_t y) const noexcept { return pixel(y * width_ + x); }

  /// True when the vector at this pixel had (near) zero norm during normalization.
  bool degenerate(std::size_t x, std::size_t y) const noexcept { return degenerate_[y * width_ + x] != 0; }
  bool degenerate(std::size_t index) const noexcept { return degenerate_[index] != 0; }
  void set_degenerate(std::size_t index, bool value) noexcept { degenerate_[index] = value ? 1 : 0; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  std::vector<std::uint8_t> degenerate_;
};

inline constexpr double kDegenerateNorm = 1e-12;

/// Dot product accumulated in double, channel 0 first. Every similarity in the
/// library goes through this function so results are reproducible bit for bit.
inline double dot(std::span<const float> a, std::span<const float> b) noexcept {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return sum;
}

/// Cosine similarity of two unit vectors.
inline double cosine_sim(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error(Errc::DimensionMismatch, "vector lengths differ");
  return dot(a, b);
}

/// Views a [rows, cols, channels] tensor as a per-pixel field without resampling.
inline FeatureField field_from_tensor(const Tensor& tensor) {
  if (tensor.rank() != 3) throw Error(Errc::DimensionMismatch, "feature tensor must be [rows, cols, channels]");
  FeatureField field(tensor.shape[1], tensor.shape[0], tensor.shape[2]);
  std::copy(tensor.data.begin(), tensor.data.end(), field.data().begin());
  return field;
}

/// Channelwise bilinear resampling of a [Hp, Wp, D] patch tensor to out_h x out_w
/// pixels using half-pixel centers with border clamping.
inline FeatureField upsample_bilinear(const Tensor& patches, std::size_t out_h, std::size_t out_w) {
  if (patches.rank() != 3) throw Error(Errc::DimensionMismatch, "feature tensor must be [rows, cols, channels]");
  if (out_h == 0 || out_w == 0) throw Error(Errc::DimensionMismatch, "output size must be positive");
  const std::size_t rows = patches.shape[0];
  const std::size_t cols = patches.shape[1];
  const std::size_t dim = patches.shape[2];

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> result(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto lo = static_cast<std::size_t>(std::floor(src));
      const std::size_t hi = std::min(lo + 1, in - 1);
      result[o] = {lo, hi, src - static_cast<double>(lo)};
    }
    return result;
  };
  const std::vector<Tap> row_taps = taps(rows, out_h);
  const std::vector<Tap> col_taps = taps(cols, out_w);

  FeatureField field(out_w, out_h, dim);
  const float* src = patches.data.data();
  parallel_for(0, out_h, 16, [&](std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y) {
      const Tap& ty = row_taps[y];
      for (std::size_t x = 0; x < out_w; ++x) {
        const Tap& tx = col_taps[x];
        const float* p00 = src + (ty.lo * cols + tx.lo) * dim;
        const float* p01 = src + (ty.lo * cols + tx.hi) * dim;
        const float* p10 = src + (ty.hi * cols + tx.lo) * dim;
        const float* p11 = src + (ty.hi * cols + tx.hi) * dim;
        const double w00 = (1.0 - ty.frac) * (1.0 - tx.frac);
        const double w01 = (1.0 - ty.frac) * tx.frac;
        const double w10 = ty.frac * (1.0 - tx.frac);
        const double w11 = ty.frac * tx.frac;
        std::span<float> out = field.at(x, y);
        for (std::size_t c = 0; c < dim; ++c) {
          out[c] = static_cast<float>(w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c]);
        }
      }
    }
  });
  return field;
}

/// Divides each pixel vector by its L2 norm in place. Vectors with norm below
/// kDegenerateNorm become zero and are flagged degenerate. Returns the number
/// of degenerate pixels.
inline std::size_t l2_normalize_in_place(FeatureField& field) {
  std::atomic<std::size_t> degenerate{0};
  parallel_for(0, field.pixel_count(), 4096, [&](std::size_t lo, std::size_t hi) {
    std::size_t local = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      std::span<float> v = field.pixel(i);
      const double norm = std::sqrt(dot(v, v));
      if (norm < kDegenerateNorm) {
        std::fill(v.begin(), v.end(), 0.0f);
        field.set_degenerate(i, true);
        ++local;
      } else {
        for (float& value : v) value = static_cast<float>(value / norm);
        field.set_degenerate(i, false);
      }
    }
    degenerate += local;
  });
  return degenerate.load();
}

inline FeatureField l2_normalize(FeatureField field) {
  l2_normalize_in_place(field);
  return field;
}

enum class NormalizeOrder {
  AfterUpsampling,   // default: upsample, then normalize per pixel
  BeforeUpsampling,  // normalize patch vectors, upsample, then renormalize
};

/// Full pipeline from an extractor tensor to a unit-norm per-pixel field sized
/// to the companion image.
inline FeatureField build_embedding_field(const Tensor& patches, std::size_t image_h, std::size_t image_w,
                                          NormalizeOrder order = NormalizeOrder::AfterUpsampling) {
  if (order == NormalizeOrder::BeforeUpsampling) {
    FeatureField patch_field = l2_normalize(field_from_tensor(patches));
    Tensor normalized{patches.shape, std::vector<float>(patch_field.data().begin(), patch_field.data().end())};
    return l2_normalize(upsample_bilinear(normalized, image_h, image_w));
  }
  return l2_normalize(upsample_bilinear(patches, image_h, image_w));
}

}  // namespace pointprop
