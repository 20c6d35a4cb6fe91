#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drcgra {

enum class ErrorCode {
  Syntax,
  DanglingReference,
  DuplicateSlotBinding,
  InvalidGraph,
  MissingLiveIn,
  MemoryOutOfRange,
  MalformedLoop,
  CapacityExceeded,
  UnsupportedDualDependency,
  UnsupportedPattern,
  Deadlock,
  MalformedTrace,
  MixedTraceFormats,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Base error for every recoverable failure in the toolchain. The code is
/// stable and is what the CLI maps to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  /// Message without the "<code>: " prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

class ParseError : public Error {
 public:
  ParseError(ErrorCode code, int line, int column, const std::string& message);

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

/// Process exit status for an error class (0 is reserved for success).
int exit_status(ErrorCode code);

}  // namespace drcgra
