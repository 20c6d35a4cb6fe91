#include "drcgra/error.hpp"

namespace drcgra {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Syntax: return "syntax";
    case ErrorCode::DanglingReference: return "dangling-reference";
    case ErrorCode::DuplicateSlotBinding: return "duplicate-slot-binding";
    case ErrorCode::InvalidGraph: return "invalid-graph";
    case ErrorCode::MissingLiveIn: return "missing-live-in";
    case ErrorCode::MemoryOutOfRange: return "memory-out-of-range";
    case ErrorCode::MalformedLoop: return "malformed-loop";
    case ErrorCode::CapacityExceeded: return "capacity-exceeded";
    case ErrorCode::UnsupportedDualDependency: return "unsupported-dual-dependency";
    case ErrorCode::UnsupportedPattern: return "unsupported-pattern";
    case ErrorCode::Deadlock: return "deadlock";
    case ErrorCode::MalformedTrace: return "malformed-trace";
    case ErrorCode::MixedTraceFormats: return "mixed-trace-formats";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

ParseError::ParseError(ErrorCode code, int line, int column, const std::string& message)
    : Error(code, "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " +
                      message),
      line_(line),
      column_(column) {}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::Syntax:
    case ErrorCode::DanglingReference:
    case ErrorCode::DuplicateSlotBinding:
    case ErrorCode::InvalidGraph:
    case ErrorCode::MalformedTrace:
    case ErrorCode::MixedTraceFormats:
      return 3;
    case ErrorCode::MissingLiveIn:
    case ErrorCode::MemoryOutOfRange:
    case ErrorCode::MalformedLoop:
      return 4;
    case ErrorCode::CapacityExceeded:
    case ErrorCode::UnsupportedDualDependency:
    case ErrorCode::UnsupportedPattern:
      return 5;
    case ErrorCode::Deadlock:
      return 6;
    case ErrorCode::InvalidArgument:
      return 2;
    case ErrorCode::Io:
      return 7;
  }
  return 1;
}

}  // namespace drcgra
