// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

namespace ld3m {

enum ExitCode : int {
  kExitOk = 0,
  kExitError = 1,
  kExitUsage = 2,
  kExitGate = 3,
  kExitNumeric = 4,
  kExitCorrupt = 5,
};

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ld3m
