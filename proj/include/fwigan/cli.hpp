#pragma once

#include <ostream>

namespace fwigan {

/// Exit codes of the command-line driver.
enum ExitCode : int { kExitOk = 0, kExitNumerical = 1, kExitInvalid = 2 };

/// Parses argv and runs one subcommand (model, simulate, add-noise, invert,
/// metrics, render, profiles). Never throws; errors go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fwigan
