#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sforge {

/// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `sforge` invocation. `args` excludes the program name. The
/// machine-readable result goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sforge
