#include "condvc/errors.hpp"

namespace condvc {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kUsage: return "usage";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kData: return "data";
    case ErrorCategory::kShape: return "shape";
    case ErrorCategory::kNumeric: return "numeric";
    case ErrorCategory::kResource: return "resource";
    case ErrorCategory::kBdRate: return "bdrate";
  }
  return "unknown";
}

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kUsage: return 2;
    case ErrorCategory::kConfig: return 3;
    case ErrorCategory::kIo: return 4;
    case ErrorCategory::kData: return 5;
    case ErrorCategory::kShape: return 6;
    case ErrorCategory::kNumeric: return 7;
    case ErrorCategory::kResource: return 8;
    case ErrorCategory::kBdRate: return 9;
  }
  return 1;
}

}  // namespace condvc
