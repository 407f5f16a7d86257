#pragma once

#include <iosfwd>

namespace evd {

/// Exit codes of the command-line driver.
enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitFailure = 2 };

/// Entry point of the `evd` command-line tool, writing to the given streams.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace evd
