#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace msvar::cli {

inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int {
  kSuccess = 0,
  kUnexpected = 1,
  kInputError = 2,
  kNonConvergence = 3,
  kNumericalError = 4,
};

// Runs one command line (args excludes the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace msvar::cli
