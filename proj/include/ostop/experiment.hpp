#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ostop {

/// Exit statuses of `ostop run`.
enum class RunStatus : int { pass = 0, assertion_failed = 1, schema_error = 2, hypothesis_violation = 3 };

struct RunOptions {
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed;     ///< overrides [experiment] seed
    std::optional<unsigned> threads;       ///< caps [experiment] threads
    bool strict = false;                   ///< warnings become assertion failures
};

struct RunOutcome {
    RunStatus status = RunStatus::pass;
    std::string message;                   ///< first failing row, or the error
    std::vector<std::string> warnings;
    std::vector<std::filesystem::path> outputs;
};

/// Loads and validates the INI config, runs the named experiment and writes
/// <name>.csv, <name>.json and <name>.manifest.json into out_dir.
RunOutcome run_experiment(const std::filesystem::path& config, const RunOptions& opts = {});

/// SHA-256 of a file, lowercase hex.
std::string sha256_file(const std::filesystem::path& file);

}  // namespace ostop
