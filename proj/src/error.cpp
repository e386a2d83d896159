#include "glsseq/error.hpp"

namespace glsseq {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotSPD: return "NotSPD";
    case ErrorCode::Singular: return "Singular";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidBlockSize: return "InvalidBlockSize";
    case ErrorCode::InsufficientMemory: return "InsufficientMemory";
    case ErrorCode::IoFailed: return "IoFailed";
    case ErrorCode::WorkspaceOverrun: return "WorkspaceOverrun";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::Incomplete: return "Incomplete";
  }
  return "Unknown";
}

}  // namespace glsseq
