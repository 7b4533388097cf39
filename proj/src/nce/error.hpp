#pragma once

#include <stdexcept>
#include <string>

namespace nce {

enum class ErrorCode {
  kInvalidArgument,
  kConfig,
  kDomain,
  kOutOfSupport,
  kNotPositiveDefinite,
  kSingularA,
  kSingularH,
  kSingularOmega,
  kNonFiniteObjective,
  kNonFiniteGradient,
  kDidNotConverge,
  kLineSearchFailed,
  kMleDiverged,
  kRejectionStall,
  kIo,
};

const char* to_string(ErrorCode code);

/// Exception type used throughout the core; the C API maps `code()` onto a
/// status value.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nce
