#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wakeforge {

/// Runs the command line `args` (without the program name). Returns the
/// process exit code: 0 success, 1 usage or configuration error, 2 numeric
/// failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wakeforge
