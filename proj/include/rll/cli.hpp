#ifndef RLL_CLI_HPP
#define RLL_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "rll/error.hpp"

namespace rll {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitData = 3,
  kExitNumerical = 4,
  kExitCheckFailed = 5,
};

int exit_code_for(ErrorKind kind);

/// Runs one command line (`args` excludes the program name). Subcommands:
/// synth, train, eval, gradcheck, sweep, schedule.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rll

#endif  // RLL_CLI_HPP
