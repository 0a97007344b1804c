#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace damagepipe::cli {

enum ExitStatus : int {
  kOk = 0,
  kPartialFailure = 1,
  kConfigError = 2,
  kBackendUnavailable = 3,
};

/// Runs one subcommand. `args` excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, char** argv);

}  // namespace damagepipe::cli
