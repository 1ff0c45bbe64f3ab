#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trackflow {

/// Stable error codes. The string names are part of the wire protocol
/// and must not be renamed.
enum class ErrorCode {
  NotFound,
  DimensionMismatch,
  UnsupportedDepth,
  TooShort,
  BadSize,
  BadConfig,
  IoError,
  FrameOutOfRange,
  BadOrder,
  SameFrame,
  NoAnchors,
  NoSuchAnchor,
  LastAnchor,
  EmptyCorridor,
  LengthMismatch,
  NoVisibleFrames,
  Empty,
  NoPairs,
  NoReference,
  EmptyFrames,
  GeometryMismatch,
  ZeroBaseline,
  ShortTrace,
  ZeroVariance,
  ParseError,
  UnknownOp,
  BadRequest,
  SessionStateError,
  NoSuchTrack,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace trackflow
