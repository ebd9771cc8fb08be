#pragma once

#include <iosfwd>

#include <json.hpp>

namespace topoprior {

/// Built-in configuration layer shared by every subcommand.
nlohmann::json default_run_config();

/// Entry point of the `topoprior` tool. Returns the process exit code:
/// 0 success, 2 invalid input or configuration, 3 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace topoprior
