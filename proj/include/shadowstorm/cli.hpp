#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace shadowstorm {

enum ExitCode : int {
  kExitOk = 0,
  kExitPartial = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitNumeric = 4,
  kExitValidation = 5,
};

/// Runs one `shadowstorm` invocation. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace shadowstorm
