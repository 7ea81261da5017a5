#pragma once

#include <ostream>
#include <span>
#include <string>

namespace spikelab {

/// Exit codes of the command-line front-end.
enum ExitCode : int { kExitOk = 0, kExitVerificationFailed = 1, kExitUsage = 2 };

/// Runs one CLI invocation; args excludes the program name.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace spikelab
