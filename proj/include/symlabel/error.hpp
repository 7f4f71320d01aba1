#pragma once

#include <stdexcept>
#include <string>

namespace symlabel {

enum class ErrorKind {
  kInvalidArgument,
  kIo,
  kData,
  kNoCorrespondences,
  kNoOverlap,
  kLabelRejected,
  kNumeric,
};

/// Library-wide exception. The kind lets callers (the restart loop in the
/// labeler, the CLI exit-code mapping) react without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::kInvalidArgument, what);
}

}  // namespace symlabel
