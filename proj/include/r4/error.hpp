// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace r4 {

enum class ErrorKind {
  DegenerateBox,
  BadConfidence,
  TransportError,
  EmptyResponse,
  NoJsonFound,
  MalformedJson,
  MissingPlaceholder,
  AllPassesFailed,
  NotAnArray,
  NoUsableDraft,
  RepairCallFailed,
  EmptyReport,
  IoError,
  VersionMismatch,
  CaseFailed,
  InputParseError,
  InvalidConfig,
  NoEvaluableClass,
  NoNoFindingCases,
  EmptyReference,
  JudgeParseFailure,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised while reading a JSONL input; carries the 1-based line number.
class InputParseError : public Error {
 public:
  InputParseError(std::size_t line, const std::string& message)
      : Error(ErrorKind::InputParseError, "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace r4
