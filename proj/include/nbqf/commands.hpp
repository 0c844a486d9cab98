#pragma once

#include <iosfwd>

namespace nbqf {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitData = 3, kExitNumerical = 4 };

/// Entry point of the command-line tool: simulate | fit-quantile | fit-health |
/// study | effects. Errors are reported on `err` and mapped to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nbqf
