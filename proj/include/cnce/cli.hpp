#pragma once

#include <ostream>

namespace cnce {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitWarnings = 2 };

/// Entry point of the `cnce` tool: estimate, experiment, limit-check, report.
/// Returns 0 on success, 1 on a usage or configuration error (the message names
/// the offending key), 2 when the run completed with warnings.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cnce
