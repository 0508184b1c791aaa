// SPDX-License-Identifier: Apache-2.0
#ifndef DSA_ERROR_HPP
#define DSA_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace dsa {

enum class ErrorCode {
  InvalidArgument,
  Parse,
  Validation,
  Io,
  UnknownLabel,
  MissingColumn,
  SchemaMismatch,
  TooLarge,
  EmptyInput,
  LengthMismatch,
  NoData,
  NoPath,
  Degenerate,
  UnknownTemplate,
  UnboundPlaceholder,
  BackendUnavailable,
  MalformedResponse,
  OptionMissing,
  MissingReference,
  Diverged,
  BackendRequired,
  CoverageGap,
};

std::string_view to_string(ErrorCode code);

/// Base exception for every failure raised by the library. The code is what
/// the C API and the CLI translate into status values and exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace dsa

#endif  // DSA_ERROR_HPP
