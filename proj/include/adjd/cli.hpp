#pragma once

#include <string>
#include <vector>

#include "adjd/config.hpp"

namespace adjd {

/// Subcommand names in the order `adjd --help` lists them.
const std::vector<std::string>& command_names();

/// Runs one subcommand with a resolved config and writes
/// <out>/{config.json, metrics.csv, report.json, checkpoints/, samples/}.
/// Returns the report JSON. Throws adjd::Error on failure; a failed
/// self-check (gradcheck) throws Error("check", ...) after writing outputs.
nlohmann::json run_command(const std::string& command, const RunConfig& cfg,
                           const std::string& out_dir);

/// Full command line entry point; returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace adjd
