#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bonsai {

enum class ErrorCode {
  kDomain,
  kBadRequest,
  kValidation,
  kConfig,
  kProviderUnreachable,
  kSchemaViolation,
  kTimeout,
  kPlanFailed,
  kSourcingFailed,
  kNotFound,
  kConflict,
  kForbidden,
  kUnauthorized,
  kStorage,
};

// Machine-readable code as it appears in API error bodies and logs.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<ErrorCode> cause = std::nullopt)
      : std::runtime_error(message), code_(code), cause_(cause) {}

  ErrorCode code() const noexcept { return code_; }
  // Underlying failure for wrapper errors such as PLAN_FAILED.
  std::optional<ErrorCode> cause() const noexcept { return cause_; }

 private:
  ErrorCode code_;
  std::optional<ErrorCode> cause_;
};

}  // namespace bonsai
