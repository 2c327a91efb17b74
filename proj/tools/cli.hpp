#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dualmotion::cli {

/// Runs the command line `args` (without the program name). Normal output
/// goes to `out`; failures print one diagnostic line to `err`.
/// Returns 0 on success, 1 on a runtime failure and 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dualmotion::cli
