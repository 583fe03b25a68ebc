#pragma once

// Result files: per-run metrics CSV, decision traces, experiment tables and
// an all-or-nothing output directory.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ctrlab/harness.hpp"
#include "ctrlab/sweep.hpp"

namespace ctrlab {

/// Version tag written into every JSON artifact.
inline constexpr int kSchemaVersion = 1;

inline constexpr const char* kMetricsHeader =
    "window,t_end,examples_seen,examples_kept,logloss,ranking_loss,bias,"
    "rel_logloss_vs_baseline,cum_cost";

/// The target directory exists and overwriting was not requested.
class OutputExists : public Error {
 public:
  using Error::Error;
};

/// Missing or incomplete run directory.
class IncompleteRun : public Error {
 public:
  using Error::Error;
};

void write_metrics_csv(std::ostream& os, const RunRecord& run);
std::vector<WindowRow> read_metrics_csv(std::istream& is,
                                        const std::string& origin);

void write_decisions_csv(std::ostream& os, const RunRecord& run);

void write_downsampling_csv(std::ostream& os, const DownsamplingResult& r);
void write_distill_csv(std::ostream& os, const DistillResult& r);
void write_isocompute_csv(std::ostream& os,
                          const std::vector<SweepResult>& sweeps);

void write_text_file(const std::filesystem::path& path,
                     const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

/// Writes go to `<target>.partial`; commit() renames it onto `target`.
/// Without commit() the staging directory is removed on destruction.
class StagingDir {
 public:
  StagingDir(std::filesystem::path target, bool force);
  ~StagingDir();
  StagingDir(const StagingDir&) = delete;
  StagingDir& operator=(const StagingDir&) = delete;

  const std::filesystem::path& path() const noexcept { return staging_; }
  void commit();

 private:
  std::filesystem::path target_;
  std::filesystem::path staging_;
  bool force_ = false;
  bool committed_ = false;
};

}  // namespace ctrlab
