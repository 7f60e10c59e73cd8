#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flagifs::cli {

/// Exit statuses shared by every subcommand.
enum ExitStatus : int {
    kSuccess = 0,
    kConditionFailed = 1,
    kUsageError = 2,
};

/// Command line flags. Each one, when present, overrides the [run] table of
/// the configuration file.
struct RunOptions {
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
    std::optional<unsigned> threads;
    std::optional<std::string> format;
};

/// 64-bit FNV-1a, used to fingerprint the effective configuration.
std::uint64_t fnv1a64(std::string_view bytes);

const std::vector<std::string>& command_names();

/// Runs one subcommand and returns its exit status. Diagnostics go to `err`.
int run_command(const std::string& name, const RunOptions& options, std::ostream& err);

int cmd_check(const RunOptions& options, std::ostream& err);
int cmd_exponents(const RunOptions& options, std::ostream& err);
int cmd_prescribe(const RunOptions& options, std::ostream& err);
int cmd_zero_orbit(const RunOptions& options, std::ostream& err);
int cmd_tour(const RunOptions& options, std::ostream& err);
int cmd_bootstrap(const RunOptions& options, std::ostream& err);

}  // namespace flagifs::cli
