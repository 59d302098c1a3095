#pragma once

#include <string>
#include <vector>

namespace deepsd::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kDivergence = 3,
};

/// Runs one subcommand. argv[0] is the program name. Diagnostics go to
/// stderr as a single line.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

/// Expands `--config FILE` into `--key=value` arguments placed directly after
/// the subcommand name, so explicit flags given later take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

}  // namespace deepsd::cli
