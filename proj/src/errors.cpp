#include "rulgp/errors.hpp"

namespace rulgp {

Error::Error(ErrorCategory category, std::string kind, const std::string& detail)
    : std::runtime_error(kind + ": " + detail), category_(category), kind_(std::move(kind)) {}

int exit_code(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::Usage:
      return 2;
    case ErrorCategory::Data:
      return 3;
    case ErrorCategory::Numerical:
      return 4;
  }
  return 1;
}

}  // namespace rulgp
