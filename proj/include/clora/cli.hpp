#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace clora {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitData = 2,
    kExitNumerical = 3,
};

/// Entry point shared by the clora binary and the tests. `args` excludes the
/// program name. Subcommands: train, ablate, verify-theorem, gen-data, eval.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace clora
