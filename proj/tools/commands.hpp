#ifndef STPP_TOOLS_COMMANDS_HPP
#define STPP_TOOLS_COMMANDS_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace stpp::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kValidation = 2, kNumeric = 3 };

// Parses argv (argv[0] is the program name) and runs one subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stpp::cli

#endif  // STPP_TOOLS_COMMANDS_HPP
