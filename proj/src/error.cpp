// SPDX-License-Identifier: Apache-2.0
#include "dsa/error.hpp"

namespace dsa {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::Validation: return "ValidationError";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NoData: return "NoData";
    case ErrorCode::NoPath: return "NoPath";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::UnknownTemplate: return "UnknownTemplate";
    case ErrorCode::UnboundPlaceholder: return "UnboundPlaceholder";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::OptionMissing: return "OptionMissing";
    case ErrorCode::MissingReference: return "MissingReference";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::BackendRequired: return "BackendRequired";
    case ErrorCode::CoverageGap: return "CoverageGap";
  }
  return "Unknown";
}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace dsa
