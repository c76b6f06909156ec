#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace pgan {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitError = 1,
    kExitUsage = 2,  // bad arguments or config
    kExitAborted = 3,  // training hit a non-finite value
    kExitMissingData = 4,
};

/// Runs one command. `args` excludes the program name. Errors are reported on `err` as a single
/// line "pgan: error[<kind>]: <message>".
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pgan
