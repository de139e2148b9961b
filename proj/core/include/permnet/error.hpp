#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace permnet {

enum class ErrorCode {
  kShape,         // extents disagree between operands
  kParameter,     // an operator parameter is out of its valid range
  kFormat,        // bad magic, version, or unparsable document
  kIntegrity,     // well-formed header but inconsistent payload
  kIo,            // filesystem failure
  kReconcile,     // residual key reconciliation impossible
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code next to
// the human message. what() renders as "<code>: <message>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

}  // namespace permnet
