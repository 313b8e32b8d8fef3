#pragma once

namespace styleswin {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,          // unknown flag / subcommand, bad flag value
  kExitMissingConfig = 3,  // --config names a file that does not exist
  kExitInvalidConfig = 4,  // config parse or validation error
  kExitRuntime = 5,        // numerical fault or other failure
  kExitIo = 6,             // unreadable / corrupt input, unwritable output
  kExitGradcheck = 7,      // gradcheck found a failing case
};

/// Entry point of the `styleswin` tool; returns the exit code and prints a
/// one-line diagnostic on stderr for every failure.
int cli_main(int argc, const char* const* argv);

}  // namespace styleswin
