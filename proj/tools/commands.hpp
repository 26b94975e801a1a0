#pragma once

#include "lmbrain/types.hpp"

#include <exception>
#include <ostream>
#include <string>
#include <vector>

namespace lmbrain::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumeric = 3;

// A required input file is absent.
struct MissingInput : ConfigError {
  using ConfigError::ConfigError;
};

struct ErrorClass {
  const char* kind;
  int exit_code;
};

// Validation problems map to 2, numeric failures to 3, anything else to 1.
ErrorClass classify_error(const std::exception& e);

/// Parses argv-style arguments (without the program name) and runs one
/// subcommand. Failures are reported as a single JSON line on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lmbrain::cli
