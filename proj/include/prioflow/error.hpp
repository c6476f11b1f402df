#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prioflow {

enum class ErrorCode {
  kInvalidArgument,  // malformed input, precondition violated by caller data
  kNotFound,         // unknown service / site / dataflow
  kIllegalState,     // lifecycle rule violated
  kDuplicate,        // double install, double allocation, duplicate link
  kExhausted,        // no free director in a subnet pool
  kNoPath,           // sites disconnected
  kParse,            // document does not match its schema
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace prioflow
