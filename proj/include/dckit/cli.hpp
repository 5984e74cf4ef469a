#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dckit::cli {

/// Exit codes of the command-line front end.
enum ExitCode : int {
  kOk = 0,
  kIoError = 1,
  kNotConverged = 2,
  kInvalid = 3,
};

/// Runs the tool on argv-style arguments (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dckit::cli
