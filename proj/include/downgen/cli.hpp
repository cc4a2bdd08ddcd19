#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace downgen {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Command-line front end. args excludes the program name. Returns the exit
/// status: 0 on success, 1 on a runtime failure, 2 on a usage or config error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace downgen
