// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace r4::cli {

/// Stable process exit codes.
enum ExitStatus : int {
  kSuccess = 0,
  kCaseFailures = 1,
  kUsageError = 2,
};

/// Entry point for `r4 {run | eval | memory | simulate | validate-config}`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace r4::cli
