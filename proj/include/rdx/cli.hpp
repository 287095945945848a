#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rdx::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int { Ok = 0, Usage = 2, DataError = 3, EstimationError = 4 };

/// Runs one command. `args` excludes the program name. Results go to
/// `out` (or the --out file), diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace rdx::cli
