#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace knight::cli {

/// Exit codes of `knight`: 0 success, 1 usage error, 2 data error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Runs one subcommand. `args` excludes the program name. Machine output
/// goes to `out`, progress and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses a key=value config file into "--key value" arguments. Blank lines
/// and text after '#' are ignored. Throws std::runtime_error on a line
/// without '='.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

}  // namespace knight::cli
