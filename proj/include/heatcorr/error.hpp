#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace heatcorr {

/// Coarse failure class, printed by the CLI as a machine-parsable prefix.
enum class ErrorCategory {
  parse,
  validation,
  io,
  numeric,
  config,
  usage,
};

constexpr std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::parse: return "parse";
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::io: return "io";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::config: return "config";
    case ErrorCategory::usage: return "usage";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

}  // namespace heatcorr
