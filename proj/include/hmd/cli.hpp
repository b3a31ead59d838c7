#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hmd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point behind the `hmdec` executable. `args` excludes the program
/// name. Returns the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hmd
