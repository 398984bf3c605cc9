#pragma once

// Command-line front end. dispatch() is the whole program minus main(), so
// the tests can drive it with synthetic argv and captured streams.

#include <ostream>
#include <string>
#include <vector>

namespace flowplug::cli {

// Exit codes. Every failure class has its own code and message prefix.
enum ExitCode : int {
  kOk = 0,
  kUsage = 2,         // bad flags, unknown subcommand
  kConfig = 3,        // config or edit-spec validation
  kMissingFile = 4,   // an input file does not exist
  kBadInput = 5,      // corrupt / wrong-version / wrong-shape input file
  kFailed = 6,        // selftest failure, divergence, other runtime errors
};

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flowplug::cli
