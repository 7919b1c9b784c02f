#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sftmn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // runtime failure
inline constexpr int kExitUsage = 2;    // bad flags or missing inputs

// Entry point of the `sftmn` tool; `args` excludes the program name.
// Subcommands: synth, train, eval, predict, ribbon.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sftmn
