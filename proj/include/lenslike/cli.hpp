#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lenslike {

// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,        // parse, I/O, or invalid input
  kExitCalibration = 3,  // calibration failed (message carries grid-point context)
  kExitUnderflow = 4,    // some posterior rows were flagged; output is still written
};

// Runs the tool on `args` (program name excluded). Diagnostics go to `err`,
// summaries to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lenslike
