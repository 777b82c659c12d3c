#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace posbias::cli {

inline constexpr const char* tool_version = "0.1.0";

enum exit_code : int {
    exit_ok = 0,
    exit_validation = 1,
    exit_io = 2,
    exit_usage = 64,
};

/// Runs one subcommand. `args` excludes the program name, e.g.
/// {"debias", "--collection", "c.tsv", ...}. Every successful run writes a
/// manifest.json beside its outputs that `replay` can re-execute.
int run_subcommand(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_subcommand(const std::vector<std::string>& args);

}  // namespace posbias::cli
