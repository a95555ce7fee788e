#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ciaosr {

/// Exit codes: 0 success, 1 usage error, 2 runtime error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// args excludes the program name, e.g. {"sr", "--ckpt", "m.ckpt", ...}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ciaosr
