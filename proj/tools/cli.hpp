#pragma once

#include <ostream>

namespace optex::cli {

enum ExitCode : int { kSuccess = 0, kRuntimeFailure = 1, kConfigFailure = 2 };

/// Full command-line entry point. Progress goes to out, diagnostics to err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace optex::cli
