#pragma once

// File formats shared by the engine, harness and service:
//   * FTNS feature tensors: "FTNS" | u16 LE version=1 | u8 dtype (1 = f32 LE) | u8 ndim |
//     ndim x u32 LE extents | row-major payload (last axis fastest).
//   * Class masks: single-channel 8-bit PNG, pixel value = class id, 255 = unlabeled.
//   * Point labels: UTF-8 CSV with header "x,y,class_id", 0-based column/row.

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pointprop/error.hpp"
#include "pointprop/raster.hpp"

namespace pointprop {

static_assert(std::endian::native == std::endian::little, "FTNS payload I/O assumes a little-endian host");

inline constexpr char kTensorMagic[4] = {'F', 'T', 'N', 'S'};
inline constexpr std::uint16_t kTensorVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;

struct Tensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;

  std::size_t rank() const noexcept { return shape.size(); }

  /// Element at a multi-index (row-major, last axis fastest).
  float at(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape.size()) throw Error(Errc::DimensionMismatch, "index rank mismatch");
    std::size_t offset = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
      if (i >= shape[axis]) throw Error(Errc::OutOfBounds, "tensor index out of range");
      offset = offset * shape[axis] + i;
      ++axis;
    }
    return data[offset];
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

namespace detail {

inline std::size_t checked_element_count(std::span<const std::uint32_t> shape) {
  if (shape.empty()) throw Error(Errc::InvalidShape, "tensor must have at least one axis");
  std::size_t count = 1;
  for (std::uint32_t extent : shape) {
    if (extent == 0) throw Error(Errc::InvalidShape, "zero extent");
    if (count > SIZE_MAX / 4 / extent) throw Error(Errc::InvalidShape, "element count overflows");
    count *= extent;
  }
  return count;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::IoFailure, "read failed: " + path.string());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoFailure, "write failed: " + path.string());
}

}  // namespace detail

/// Size in bytes of the FTNS header for a tensor of the given rank.
inline constexpr std::size_t tensor_header_size(std::size_t rank) { return 4 + 2 + 1 + 1 + 4 * rank; }

inline std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
  if (tensor.shape.size() > 255) throw Error(Errc::InvalidShape, "too many axes");
  const std::size_t count = detail::checked_element_count(tensor.shape);
  if (count != tensor.data.size()) {
    throw Error(Errc::InvalidShape, "shape product does not match payload length");
  }
  std::vector<std::uint8_t> bytes(tensor_header_size(tensor.rank()) + count * sizeof(float));
  std::uint8_t* out = bytes.data();
  std::memcpy(out, kTensorMagic, 4);
  out[4] = static_cast<std::uint8_t>(kTensorVersion & 0xff);
  out[5] = static_cast<std::uint8_t>(kTensorVersion >> 8);
  out[6] = kDtypeF32;
  out[7] = static_cast<std::uint8_t>(tensor.rank());
  out += 8;
  for (std::uint32_t extent : tensor.shape) {
    std::memcpy(out, &extent, 4);
    out += 4;
  }
  std::memcpy(out, tensor.data.data(), count * sizeof(float));
  return bytes;
}

inline Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kTensorMagic, 4) != 0) {
    throw Error(Errc::BadMagic, "missing FTNS magic");
  }
  if (bytes.size() < 8) throw Error(Errc::TruncatedPayload, "header truncated");
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kTensorVersion) {
    throw Error(Errc::UnsupportedVersion, "version " + std::to_string(version));
  }
  if (bytes[6] != kDtypeF32) throw Error(Errc::UnsupportedDtype, "dtype code " + std::to_string(bytes[6]));
  const std::size_t rank = bytes[7];
  const std::size_t header = tensor_header_size(rank);
  if (bytes.size() < header) throw Error(Errc::TruncatedPayload, "extents truncated");

  Tensor tensor;
  tensor.shape.resize(rank);
  for (std::size_t axis = 0; axis < rank; ++axis) {
    std::memcpy(&tensor.shape[axis], bytes.data() + 8 + 4 * axis, 4);
  }
  const std::size_t count = detail::checked_element_count(tensor.shape);
  const std::size_t payload = bytes.size() - header;
  if (payload < count * sizeof(float)) {
    throw Error(Errc::TruncatedPayload, "expected " + std::to_string(count) + " elements, found " +
                                            std::to_string(payload / sizeof(float)));
  }
  if (payload > count * sizeof(float)) throw Error(Errc::TrailingData, "bytes after payload");
  tensor.data.resize(count);
  std::memcpy(tensor.data.data(), bytes.data() + header, count * sizeof(float));
  return tensor;
}

inline Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(detail::read_file(path)); }

inline void write_tensor(const Tensor& tensor, const std::filesystem::path& path) {
  detail::write_file(path, encode_tensor(tensor));
}

// ---------------------------------------------------------------------------
// PNG masks

namespace detail {

struct PngReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

inline void png_read_from_span(png_structp png, png_bytep out, png_size_t length) {
  auto* cursor = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + length > cursor->bytes.size()) {
    png_error(png, "unexpected end of PNG data");
  }
  std::memcpy(out, cursor->bytes.data() + cursor->offset, length);
  cursor->offset += length;
}

inline void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

inline void png_flush_noop(png_structp) {}

inline void png_warning_silent(png_structp, png_const_charp) {}

// Keeps libpng quiet: the message lands in the error pointer and is rethrown
// as an Error once control is back outside setjmp.
struct PngErrorSink {
  std::string message;
};

[[noreturn]] inline void png_error_capture(png_structp png, png_const_charp msg) {
  if (auto* sink = static_cast<PngErrorSink*>(png_get_error_ptr(png))) sink->message = msg;
  png_longjmp(png, 1);
}

inline png_structp create_png_reader(PngErrorSink& sink) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, png_error_capture, png_warning_silent);
  if (png == nullptr) throw Error(Errc::IoFailure, "png_create_read_struct failed");
  return png;
}

// Larger masks are treated as corrupt rather than attempted.
inline constexpr std::size_t kMaxPngPixels = std::size_t{1} << 31;

}  // namespace detail

struct PngInfo {
  std::size_t width = 0;
  std::size_t height = 0;
  int color_type = 0;
  int bit_depth = 0;
};

/// Reads only the IHDR of a PNG buffer (any color type).
inline PngInfo probe_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error(Errc::IoFailure, "not a PNG stream");
  }
  detail::PngErrorSink sink;
  png_structp png = detail::create_png_reader(sink);
  png_infop info = png_create_info_struct(png);
  detail::PngReadCursor cursor{bytes, 0};
  PngInfo result;
  volatile bool ok = false;
  if (info != nullptr && setjmp(png_jmpbuf(png)) == 0) {
    png_set_read_fn(png, &cursor, detail::png_read_from_span);
    png_read_info(png, info);
    result.width = png_get_image_width(png, info);
    result.height = png_get_image_height(png, info);
    result.color_type = png_get_color_type(png, info);
    result.bit_depth = png_get_bit_depth(png, info);
    ok = true;
  }
  png_destroy_read_struct(&png, info != nullptr ? &info : nullptr, nullptr);
  if (!ok) throw Error(Errc::IoFailure, "malformed PNG header: " + sink.message);
  return result;
}

inline ClassMask decode_mask_png(std::span<const std::uint8_t> bytes) {
  const PngInfo header = probe_png(bytes);
  if (header.color_type != PNG_COLOR_TYPE_GRAY || header.bit_depth != 8) {
    throw Error(Errc::NotGrayscale8, "mask PNG must be single-channel 8-bit");
  }
  if (header.width * header.height > detail::kMaxPngPixels) throw Error(Errc::InvalidShape, "PNG too large");
  ClassMask mask(header.width, header.height);
  std::vector<png_bytep> rows(header.height);
  for (std::size_t y = 0; y < header.height; ++y) rows[y] = mask.storage().data() + y * header.width;

  detail::PngErrorSink sink;
  png_structp png = detail::create_png_reader(sink);
  png_infop info = png_create_info_struct(png);
  detail::PngReadCursor cursor{bytes, 0};
  volatile bool ok = false;
  if (info != nullptr && setjmp(png_jmpbuf(png)) == 0) {
    png_set_read_fn(png, &cursor, detail::png_read_from_span);
    png_read_info(png, info);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    ok = true;
  }
  png_destroy_read_struct(&png, info != nullptr ? &info : nullptr, nullptr);
  if (!ok) throw Error(Errc::IoFailure, "corrupt PNG data: " + sink.message);
  return mask;
}

namespace detail {

// Shared by the gray mask encoder and the RGB preview encoder.
inline std::vector<std::uint8_t> encode_png(const std::uint8_t* pixels, std::size_t width, std::size_t height,
                                            int color_type, std::size_t channels) {
  if (width == 0 || height == 0) throw Error(Errc::InvalidShape, "empty image");
  std::vector<std::uint8_t> out;
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(pixels + y * width * channels);
  }
  PngErrorSink sink;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, png_error_capture, png_warning_silent);
  if (png == nullptr) throw Error(Errc::IoFailure, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  volatile bool ok = false;
  if (info != nullptr && setjmp(png_jmpbuf(png)) == 0) {
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    ok = true;
  }
  png_destroy_write_struct(&png, info != nullptr ? &info : nullptr);
  if (!ok) throw Error(Errc::IoFailure, "PNG encoding failed: " + sink.message);
  return out;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_mask_png(const ClassMask& mask) {
  return detail::encode_png(mask.storage().data(), mask.width(), mask.height(), PNG_COLOR_TYPE_GRAY, 1);
}

/// Encodes interleaved 8-bit RGB pixels (used for synthetic scene previews).
inline std::vector<std::uint8_t> encode_rgb_png(std::span<const std::uint8_t> rgb, std::size_t width,
                                                std::size_t height) {
  if (rgb.size() != width * height * 3) throw Error(Errc::DimensionMismatch, "RGB buffer size");
  return detail::encode_png(rgb.data(), width, height, PNG_COLOR_TYPE_RGB, 3);
}

inline ClassMask read_mask(const std::filesystem::path& path) { return decode_mask_png(detail::read_file(path)); }

inline void write_mask(const ClassMask& mask, const std::filesystem::path& path) {
  detail::write_file(path, encode_mask_png(mask));
}

// ---------------------------------------------------------------------------
// Point-label CSV

namespace detail {

inline std::size_t parse_csv_uint(std::string_view field, std::size_t line) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
  std::size_t value = 0;
  auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc{} || end != field.data() + field.size()) {
    throw Error(Errc::MalformedCsv, "line " + std::to_string(line) + ": bad integer '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace detail

/// Optional bounds for validating label coordinates.
struct ImageExtent {
  std::size_t width = 0;
  std::size_t height = 0;
};

inline void validate_labels(std::span<const PointLabel> labels, std::optional<ImageExtent> extent = std::nullopt) {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const PointLabel& label : labels) {
    if (extent && (label.x >= extent->width || label.y >= extent->height)) {
      throw Error(Errc::OutOfBounds, "label (" + std::to_string(label.x) + "," + std::to_string(label.y) +
                                         ") outside image");
    }
    if (!seen.emplace(label.x, label.y).second) {
      throw Error(Errc::DuplicatePoint,
                  "duplicate label at (" + std::to_string(label.x) + "," + std::to_string(label.y) + ")");
    }
  }
}

inline std::string format_labels_csv(std::span<const PointLabel> labels) {
  std::string out = "x,y,class_id\n";
  for (const PointLabel& label : labels) {
    out += std::to_string(label.x) + ',' + std::to_string(label.y) + ',' + std::to_string(label.class_id) + '\n';
  }
  return out;
}

inline std::vector<PointLabel> parse_labels_csv(std::string_view text,
                                                std::optional<ImageExtent> extent = std::nullopt) {
  std::vector<PointLabel> labels;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const std::size_t eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
          static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
        line.remove_prefix(3);
      }
      if (line != "x,y,class_id") throw Error(Errc::MalformedCsv, "expected header 'x,y,class_id'");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos || line.find(',', c2 + 1) != std::string_view::npos) {
      throw Error(Errc::MalformedCsv, "line " + std::to_string(line_no) + ": expected 3 fields");
    }
    PointLabel label;
    label.x = detail::parse_csv_uint(line.substr(0, c1), line_no);
    label.y = detail::parse_csv_uint(line.substr(c1 + 1, c2 - c1 - 1), line_no);
    const std::size_t id = detail::parse_csv_uint(line.substr(c2 + 1), line_no);
    if (id > 255) throw Error(Errc::ClassIdOutOfRange, "line " + std::to_string(line_no) + ": class id > 255");
    label.class_id = static_cast<std::uint8_t>(id);
    labels.push_back(label);
  }
  if (!header_seen) throw Error(Errc::MalformedCsv, "empty label file");
  validate_labels(labels, extent);
  return labels;
}

inline std::vector<PointLabel> read_labels(const std::filesystem::path& path,
                                           std::optional<ImageExtent> extent = std::nullopt) {
  const std::vector<std::uint8_t> bytes = detail::read_file(path);
  return parse_labels_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), extent);
}

inline void write_labels(std::span<const PointLabel> labels, const std::filesystem::path& path) {
  validate_labels(labels);
  const std::string text = format_labels_csv(labels);
  detail::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace pointprop
