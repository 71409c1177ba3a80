// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace curvesplat {

// Typed failure categories surfaced through exceptions so callers (and
// tests) can distinguish contract violations from data problems.
enum class ErrorCode {
  InvalidIndex,
  DegenerateInput,
  IllConditioned,
  InsufficientData,
  ContractViolation,
  InvalidArgument,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace curvesplat
