#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lfd {

enum class ErrorCode {
  kNonOrthonormalAxes,
  kNotConverged,
  kDegenerateHand,
  kSchemaMismatch,
  kDegenerateDataset,
  kDimensionMismatch,
  kInvalidTransition,
  kSteppedAfterDone,
  kExpertStuck,
  kSchemaVersionMismatch,
  kParseError,
  kTooFew,
  kNonFiniteLoss,
  kConfigError,
  kIoError,
  kPortInUse,
  kIkTrackingLost,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this exception; callers switch
// on code() when they need to recover (e.g. retrying IK from a new seed).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lfd
