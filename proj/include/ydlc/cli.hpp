#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ydlc/error.hpp"

namespace ydlc {

// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitInvariant = 3 };

int exit_code(ErrorKind kind);

// `args` excludes the program name. Diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

// Relative checkpoint paths resolve against $YDLC_CHECKPOINT_DIR when set.
std::string resolve_checkpoint(const std::string& path);

}  // namespace ydlc
