#include "fly0/error.hpp"

namespace fly0 {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidDepth: return "InvalidDepth";
    case ErrorCode::PixelOutOfBounds: return "PixelOutOfBounds";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::InvalidPose: return "InvalidPose";
    case ErrorCode::InvalidIntrinsics: return "InvalidIntrinsics";
    case ErrorCode::StaleField: return "StaleField";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::OrderTooHigh: return "OrderTooHigh";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::InvalidTrajectory: return "InvalidTrajectory";
    case ErrorCode::DegreeTooLow: return "DegreeTooLow";
    case ErrorCode::EmptyInstruction: return "EmptyInstruction";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::GroundingUnavailable: return "GroundingUnavailable";
    case ErrorCode::TrajectoryDomainEmpty: return "TrajectoryDomainEmpty";
    case ErrorCode::Unsatisfiable: return "Unsatisfiable";
    case ErrorCode::DepthUnavailable: return "DepthUnavailable";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

}  // namespace fly0
