#pragma once

// The gen / run / report commands behind the ctrlab executable.
//
// Exit codes:
//   0  success
//   1  usage error (bad flags)
//   2  configuration or schema error
//   3  output exists and --force was not given
//   4  runtime failure
//   5  report input missing or incomplete

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "json.hpp"

#include "ctrlab/config.hpp"

namespace ctrlab {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitOutputExists = 3,
  kExitRuntime = 4,
  kExitIncomplete = 5,
};

struct RunOptions {
  /// Overrides the document's output_dir.
  std::string out;
  bool force = false;
  std::optional<int> parallelism;
  std::optional<std::uint64_t> seed_override;
};

/// Applies overrides; used by every command before running.
void apply_overrides(ExperimentFile& cfg, const RunOptions& opt);

/// Exports the trial range [hist_start, online_end) of the configured stream
/// hashed with the trial model's hash. Returns the written path.
std::filesystem::path cmd_gen(const ExperimentFile& cfg,
                              const RunOptions& opt, std::ostream& log);

/// Runs the experiment and writes its artifacts into the output directory
/// atomically. Returns the directory.
std::filesystem::path cmd_run(const ExperimentFile& cfg, const RunOptions& opt,
                              std::ostream& log);

/// Writes `<dir>/report/` with one tidy CSV per figure analogue and
/// report.txt. Returns the report directory.
std::filesystem::path cmd_report(const std::filesystem::path& dir,
                                 std::ostream& log);

/// {"schema_version", "error": {"type", "message", "key"?}}
nlohmann::json error_json(const std::string& type, const std::string& message,
                          const std::string& key = "");

/// Maps an exception to an exit code and its error JSON.
int classify_error(const std::exception& e, nlohmann::json& out);

/// Command-line entry point shared by the executable and tests.
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace ctrlab
