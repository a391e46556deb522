#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dgct {

/// Runs one command line (without the program name). Returns the process
/// exit status: 0 on success, 1 on runtime failure, 2 on usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string usage();

}  // namespace dgct
