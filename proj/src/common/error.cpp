#include "cathlab/error.hpp"

namespace cathlab {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::DegeneratePose: return "degenerate_pose";
    case ErrorCode::DegenerateProjection: return "degenerate_projection";
    case ErrorCode::Bounds: return "bounds";
    case ErrorCode::SizeMismatch: return "size_mismatch";
    case ErrorCode::MalformedFile: return "malformed_file";
    case ErrorCode::IndexOutOfRange: return "index_out_of_range";
    case ErrorCode::NonManifold: return "non_manifold";
    case ErrorCode::NotClosed: return "not_closed";
    case ErrorCode::Orientation: return "orientation";
    case ErrorCode::IllPosed: return "ill_posed";
    case ErrorCode::InsufficientData: return "insufficient_data";
    case ErrorCode::Undefined: return "undefined";
    case ErrorCode::MatchingFailure: return "matching_failure";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

}  // namespace cathlab
