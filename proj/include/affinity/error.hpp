#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace affinity {

enum class ErrorCode {
  MalformedKey,
  NoSuchPool,
  DuplicatePool,
  InsufficientNodes,
  BadRegex,
  ObjectMissing,
  DuplicatePrefix,
  DeadlockDetected,
  BadConfig,
  TraceMismatch,
  Io,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedKey: return "MalformedKey";
    case ErrorCode::NoSuchPool: return "NoSuchPool";
    case ErrorCode::DuplicatePool: return "DuplicatePool";
    case ErrorCode::InsufficientNodes: return "InsufficientNodes";
    case ErrorCode::BadRegex: return "BadRegex";
    case ErrorCode::ObjectMissing: return "ObjectMissing";
    case ErrorCode::DuplicatePrefix: return "DuplicatePrefix";
    case ErrorCode::DeadlockDetected: return "DeadlockDetected";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::TraceMismatch: return "TraceMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

// All library failures are reported with this exception; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace affinity
