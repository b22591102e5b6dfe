#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qnn {

enum class ErrorKind {
  ShapeMismatch,
  QuantizerOrder,
  UnsupportedStride,
  SlopeOutOfRange,
  NumericOverflow,
  BadMagic,
  BadVersion,
  Truncated,
  InvalidNode,
  InvalidGraph,
  Unquantizable,
  CalibrationEmpty,
  OutOfFrame,
  DisallowedShape,
  MissingModel,
  MissingPlane,
  InvalidArgument,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::QuantizerOrder: return "QuantizerOrder";
    case ErrorKind::UnsupportedStride: return "UnsupportedStride";
    case ErrorKind::SlopeOutOfRange: return "SlopeOutOfRange";
    case ErrorKind::NumericOverflow: return "NumericOverflow";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::BadVersion: return "BadVersion";
    case ErrorKind::Truncated: return "Truncated";
    case ErrorKind::InvalidNode: return "InvalidNode";
    case ErrorKind::InvalidGraph: return "InvalidGraph";
    case ErrorKind::Unquantizable: return "Unquantizable";
    case ErrorKind::CalibrationEmpty: return "CalibrationEmpty";
    case ErrorKind::OutOfFrame: return "OutOfFrame";
    case ErrorKind::DisallowedShape: return "DisallowedShape";
    case ErrorKind::MissingModel: return "MissingModel";
    case ErrorKind::MissingPlane: return "MissingPlane";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library. `kind()` is stable and machine-readable.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

inline void check(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace qnn
