#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace condvc {

// Failure classes surfaced by the command-line tools as a one-line
// "error[<category>]: ..." message and a category-specific exit code.
enum class ErrorCategory {
  kConfig,   // invalid or unknown configuration value
  kUsage,    // bad command-line usage
  kIo,       // unreadable/unwritable file, malformed file contents
  kData,     // dataset contents inconsistent with the request
  kShape,    // tensor shape contract violated
  kNumeric,  // NaN/Inf encountered
  kResource, // allocation failure
  kBdRate,   // Bjontegaard metric preconditions violated
};

std::string_view category_name(ErrorCategory category);
int exit_code(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

}  // namespace condvc
