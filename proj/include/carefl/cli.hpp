#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace carefl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;  // bad flags, unknown subcommand, bad config
inline constexpr int kExitData = 2;   // data, numeric, shape and training failures

// Runs one command line (arguments after the program name). The report is
// written to `out`, or to the --out file; error records go to `err` as a
// single line "error[<kind>]: <message>".
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace carefl
