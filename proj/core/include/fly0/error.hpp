#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fly0 {

enum class ErrorCode {
  // geometry
  InvalidDepth,
  PixelOutOfBounds,
  BehindCamera,
  InvalidPose,
  InvalidIntrinsics,
  // mapping
  StaleField,
  // bspline
  OutOfDomain,
  OrderTooHigh,
  TooFewPoints,
  InvalidTrajectory,
  // optimizer
  DegreeTooLow,
  // grounding
  EmptyInstruction,
  ParseError,
  OutOfBounds,
  GroundingUnavailable,
  // simulator
  TrajectoryDomainEmpty,
  Unsatisfiable,
  // pipeline
  DepthUnavailable,
  // harness
  IoError,
  SchemaError,
  EmptyInput,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a typed error code. All recoverable failures in fly0
/// are reported through this type; `what()` holds a human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fly0
