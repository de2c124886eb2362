#pragma once

#include <iosfwd>

namespace oeflow::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDiverged = 2, kIo = 3 };

/// Runs one oeflow command line. Results go to files under --out; progress
/// lines go to `log` unless --quiet; errors go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& log, std::ostream& err);

}  // namespace oeflow::cli
