#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace glsseq {

enum class ErrorCode {
  NotSPD,
  Singular,
  DimensionMismatch,
  InvalidArgument,
  InvalidBlockSize,
  InsufficientMemory,
  IoFailed,
  WorkspaceOverrun,
  BadMagic,
  TruncatedFile,
  DimMismatch,
  OutOfRange,
  Incomplete,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library. `index()` carries the failing
/// pivot for NotSPD/Singular and the block id for IoFailed/TruncatedFile.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what,
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        index_(index),
        detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> index() const noexcept { return index_; }
  /// Message without the error-code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
  std::string detail_;
};

}  // namespace glsseq
