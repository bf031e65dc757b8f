#pragma once

#include <stdexcept>
#include <string>

namespace pointprop {

enum class Errc {
  BadMagic,
  UnsupportedVersion,
  UnsupportedDtype,
  TruncatedPayload,
  TrailingData,
  InvalidShape,
  IoFailure,
  NotGrayscale8,
  ClassIdOutOfRange,
  MalformedCsv,
  DuplicatePoint,
  OutOfBounds,
  DimensionMismatch,
  EmptyLabelSet,
  InvalidConfig,
  AllPixelsLabeled,
  EmptyMask,
  TooManyPoints,
  ShapeMismatch,
  EmptyMatrix,
  MissingFeatureFile,
  MaskShapeMismatch,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::BadMagic: return "BadMagic";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::UnsupportedDtype: return "UnsupportedDtype";
    case Errc::TruncatedPayload: return "TruncatedPayload";
    case Errc::TrailingData: return "TrailingData";
    case Errc::InvalidShape: return "InvalidShape";
    case Errc::IoFailure: return "IoFailure";
    case Errc::NotGrayscale8: return "NotGrayscale8";
    case Errc::ClassIdOutOfRange: return "ClassIdOutOfRange";
    case Errc::MalformedCsv: return "MalformedCsv";
    case Errc::DuplicatePoint: return "DuplicatePoint";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EmptyLabelSet: return "EmptyLabelSet";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::AllPixelsLabeled: return "AllPixelsLabeled";
    case Errc::EmptyMask: return "EmptyMask";
    case Errc::TooManyPoints: return "TooManyPoints";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::EmptyMatrix: return "EmptyMatrix";
    case Errc::MissingFeatureFile: return "MissingFeatureFile";
    case Errc::MaskShapeMismatch: return "MaskShapeMismatch";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying an Errc.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace pointprop
