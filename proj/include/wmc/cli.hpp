#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wmc {

/// Process exit codes.
enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitData = 3,
    kExitNumeric = 4,
};

/// Runs one `wmc` command. `args` excludes the program name. Results go to
/// `out`; diagnostics and timing go to `log`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& log);

}  // namespace wmc
