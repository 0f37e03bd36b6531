#pragma once

#include "beamforge/config.hpp"

#include <filesystem>
#include <iosfwd>

namespace beamforge::cli {

/// Runs one CLI invocation. Returns the process exit code; diagnostics go to
/// `err`, results to `out`.
int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

/// The `pipeline` subcommand without argument parsing. `cfg` need not be
/// resolved; the resolved form is written to dir/resolved.cfg.
void pipeline(RunConfig cfg, const std::filesystem::path &dir, std::ostream &log);

} // namespace beamforge::cli
