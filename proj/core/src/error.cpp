#include "lfd/error.hpp"

namespace lfd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonOrthonormalAxes: return "NonOrthonormalAxes";
    case ErrorCode::kNotConverged: return "NotConverged";
    case ErrorCode::kDegenerateHand: return "DegenerateHand";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kDegenerateDataset: return "DegenerateDataset";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInvalidTransition: return "InvalidTransition";
    case ErrorCode::kSteppedAfterDone: return "SteppedAfterDone";
    case ErrorCode::kExpertStuck: return "ExpertStuck";
    case ErrorCode::kSchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kTooFew: return "TooFew";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kPortInUse: return "PortInUse";
    case ErrorCode::kIkTrackingLost: return "IkTrackingLost";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace lfd
