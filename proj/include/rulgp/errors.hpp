#pragma once

#include <stdexcept>
#include <string>

namespace rulgp {

// Coarse error classes; the CLI maps these onto exit codes.
enum class ErrorCategory { Usage, Data, Numerical };

/// Library-wide exception. `kind()` names the specific failure
/// ("SchemaError", "InsufficientData", ...), and what() reads "Kind: detail".
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string kind, const std::string& detail);

  ErrorCategory category() const noexcept { return category_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  ErrorCategory category_;
  std::string kind_;
};

inline Error usage_error(std::string kind, const std::string& detail) {
  return Error(ErrorCategory::Usage, std::move(kind), detail);
}
inline Error data_error(std::string kind, const std::string& detail) {
  return Error(ErrorCategory::Data, std::move(kind), detail);
}
inline Error numerical_error(std::string kind, const std::string& detail) {
  return Error(ErrorCategory::Numerical, std::move(kind), detail);
}

int exit_code(ErrorCategory category) noexcept;

}  // namespace rulgp
