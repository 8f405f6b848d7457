#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace prefviz::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitPortInUse = 3;

/// Entry point of the `prefviz` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace prefviz::cli
