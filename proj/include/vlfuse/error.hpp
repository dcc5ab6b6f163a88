#pragma once

#include <stdexcept>
#include <string>

namespace vlfuse {

/// Broad failure classes. They map onto CLI exit codes and HTTP status classes.
enum class ErrorKind {
  kInvalidArgument,  // caller supplied something malformed
  kNotFound,         // unknown id, missing file
  kBudgetExceeded,   // volume would not fit into the memory budget
  kIo,               // filesystem failure
  kCorrupt,          // checksum or format validation failed
  kConflict,         // state does not allow the request (e.g. a job already running)
  kInternal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for errors caused by the request rather than by the system.
  bool is_user_error() const noexcept {
    return kind_ == ErrorKind::kInvalidArgument || kind_ == ErrorKind::kNotFound ||
           kind_ == ErrorKind::kBudgetExceeded || kind_ == ErrorKind::kConflict;
  }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kNotFound: return "not_found";
    case ErrorKind::kBudgetExceeded: return "budget_exceeded";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kCorrupt: return "corrupt";
    case ErrorKind::kConflict: return "conflict";
    case ErrorKind::kInternal: return "internal";
  }
  return "internal";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorKind::kInvalidArgument, message);
}

}  // namespace vlfuse
