#pragma once

#include <string>
#include <vector>

namespace normgen {

/// Process exit codes of the `normgen` tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,     ///< unexpected internal error
  kExitUsage = 2,       ///< bad command line
  kExitConfig = 3,      ///< invalid configuration value or file
  kExitIo = 4,          ///< missing/unreadable/unwritable file
  kExitData = 5,        ///< invalid image, shape or dataset content
  kExitDiverged = 6,    ///< training produced a non-finite loss
  kExitEvaluation = 7,  ///< missing generated images or undefined metric
};

/// Entry point shared by the binary and the integration tests. args[0] is the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace normgen
