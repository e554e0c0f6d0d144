#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "swave/config.hpp"
#include "swave/estimators.hpp"

namespace swave {

inline constexpr char const* kToolVersion = "0.1.0";

enum ExitCode : int
{
    exit_pass = 0,
    exit_fail = 1,
    exit_inconclusive = 2,
    exit_validation = 3,
    exit_internal = 4,
};

int exit_code(Verdict v);

struct CliOptions
{
    std::string command;  ///< simulate | oracle-linear | verify | check-conditions
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::string kind;  ///< verify only
};

/// Loads the config, applies flag overrides, validates, runs the command and
/// writes its outputs plus manifest.json. Errors are reported on `err` and
/// mapped to exit codes; nothing throws.
int run_cli(CliOptions const& opts, std::ostream& out, std::ostream& err);

/// Same as run_cli on an already parsed config (overrides applied by caller).
int run_command(std::string const& command, std::string const& kind, RunConfig const& cfg, std::ostream& out);

/// RFC 4180 table with CRLF line ends; numbers as %.17g.
std::string csv_table(std::vector<std::string> const& header, std::vector<std::vector<double>> const& rows);

std::vector<std::string> verify_kinds();

}  // namespace swave
