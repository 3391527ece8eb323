#pragma once

#include <string>
#include <vector>

namespace sg {

/// Parse one command line and execute it. Returns the process exit code:
/// 0 success, 2 config error, 3 data error, 4 numerical error, 5 io error,
/// 1 anything unexpected. Exposed as a function so tests can drive the CLI
/// without spawning processes.
int run_cli(int argc, const char* const* argv);

/// Same, from an argument list without the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace sg
