#include "trackflow/error.hpp"

namespace trackflow {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::UnsupportedDepth: return "UnsupportedDepth";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::BadSize: return "BadSize";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FrameOutOfRange: return "FrameOutOfRange";
    case ErrorCode::BadOrder: return "BadOrder";
    case ErrorCode::SameFrame: return "SameFrame";
    case ErrorCode::NoAnchors: return "NoAnchors";
    case ErrorCode::NoSuchAnchor: return "NoSuchAnchor";
    case ErrorCode::LastAnchor: return "LastAnchor";
    case ErrorCode::EmptyCorridor: return "EmptyCorridor";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NoVisibleFrames: return "NoVisibleFrames";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::NoPairs: return "NoPairs";
    case ErrorCode::NoReference: return "NoReference";
    case ErrorCode::EmptyFrames: return "EmptyFrames";
    case ErrorCode::GeometryMismatch: return "GeometryMismatch";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::ShortTrace: return "ShortTrace";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownOp: return "UnknownOp";
    case ErrorCode::BadRequest: return "BadRequest";
    case ErrorCode::SessionStateError: return "SessionStateError";
    case ErrorCode::NoSuchTrack: return "NoSuchTrack";
  }
  return "Unknown";
}

}  // namespace trackflow
