#pragma once

#include <stdexcept>
#include <string>

namespace stsep {

enum class ErrorCode {
  kInvalidArgument = 1,
  kShapeMismatch,
  kNotPositiveDefinite,
  kNonFiniteObjective,
  kRankDeficient,
  kIo,
  kMalformedHeader,
  kSizeMismatch,
  kNonFiniteValue,
};

const char* ToString(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace stsep
