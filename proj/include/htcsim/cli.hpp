#pragma once

#include <iosfwd>

namespace htcsim {

enum ExitCode : int { kExitOk = 0, kExitIo = 1, kExitConfig = 2, kExitInternal = 3 };

/// Entry point for the `htcsim` command (validate, run, compare).
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace htcsim
