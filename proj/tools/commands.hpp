#pragma once

#include <string>
#include <vector>

namespace robustft::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kNumericError = 3,
};

/// Parses arguments, runs the selected subcommand and maps failures to exit codes.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace robustft::cli
