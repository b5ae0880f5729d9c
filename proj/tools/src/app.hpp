#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace domino::cli {

enum ExitCode : int { ok = 0, usage = 1, io = 2, parse = 3, contract = 4, numerical = 5 };

// Entry point behind `domino`; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace domino::cli
