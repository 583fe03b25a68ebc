#pragma once

// Multi-trial experiments: iso-compute sweeps over model size, downsampling
// rate/schedule comparisons and distillation schedule comparisons across data
// volumes. Trials run concurrently; aggregation is always in config order.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctrlab/distill.hpp"
#include "ctrlab/harness.hpp"

namespace ctrlab {

class ClickStream;

/// An iso-compute plan cannot give some size enough examples.
class BudgetError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// How the per-size example count is realized.
enum class IsoKnob {
  rate,     // uniform negative downsampling over the template's range
  history,  // unsampled, start date moved forward
};

struct IsoComputeSpec {
  double budget = 0.0;
  /// Strictly increasing in param_count.
  std::vector<ModelArch> sizes;
  TrialConfig base;
  std::int64_t min_examples = 0;
  IsoKnob knob = IsoKnob::rate;

  void validate() const;
};

struct PlannedTrial {
  TrialConfig cfg;
  double budget = 0.0;
  /// round(budget / (kappa * params)).
  std::int64_t planned_examples = 0;
  double planned_cost = 0.0;
  /// Uniform negative keep rate; 1 under the history knob.
  double rate = 1.0;
};

/// Throws BudgetError when a size gets fewer than max(min_examples, number of
/// positives + 1) examples, or more than the template's range holds.
std::vector<PlannedTrial> plan_iso(const IsoComputeSpec& spec,
                                   const ClickStream& stream);

struct SweepRow {
  std::string model;
  std::uint64_t params = 0;
  double budget = 0.0;
  std::int64_t planned_examples = 0;
  double planned_cost = 0.0;
  double rate = 1.0;
  std::int64_t hist_start = 0;
  std::int64_t examples_kept = 0;
  double realized_cost = 0.0;
  double final_logloss = 0.0;
  double final_ranking_loss = 0.0;
  double final_bias = 0.0;
};

struct SweepResult {
  double budget = 0.0;
  /// Ordered by params.
  std::vector<SweepRow> rows;
  std::size_t argmin = 0;
  /// Argmin sits at the smallest or the largest size.
  bool boundary = true;
  std::vector<RunRecord> runs;
};

/// Argmin of final_logloss and the boundary flag; needs at least 3 rows.
void summarize_sweep(SweepResult& result);

/// Runs the planned trials of one budget.
SweepResult run_sweep(std::span<const PlannedTrial> plan,
                      const ClickStream& stream, int parallelism);

/// One sweep per budget, all trials scheduled together.
std::vector<SweepResult> run_sweeps(std::span<const IsoComputeSpec> specs,
                                    const ClickStream& stream,
                                    int parallelism);

enum class ScheduleKind { continuous, cutoff };
std::string to_string(ScheduleKind k);

struct DownsamplingSpec {
  /// Template: range, model, optimizer. Its sampler is replaced.
  TrialConfig base;
  /// Must contain 1.
  std::vector<double> rates;
  std::vector<ScheduleKind> schedules = {ScheduleKind::continuous,
                                         ScheduleKind::cutoff};
  /// Cutoff time as a fraction of the historical range.
  double cutoff_fraction = 0.5;
  /// Start of the unsampled reference run; at or before base.hist_start.
  std::int64_t baseline_start = 0;

  void validate() const;
};

struct DownsamplingRow {
  std::string name;
  double rate = 1.0;
  ScheduleKind schedule = ScheduleKind::continuous;
  std::optional<std::int64_t> convergence_window;
  std::int64_t convergence_seen = -1;
  std::int64_t convergence_kept = -1;
  /// Pooled tail logloss relative to the reference run.
  double final_rel_logloss = 0.0;
  /// Pooled tail logloss relative to the rate-1 run on the same range.
  double final_rel_vs_full = 0.0;
  double final_logloss = 0.0;
  double final_ranking_loss = 0.0;
  double final_bias = 0.0;
  std::int64_t examples_kept = 0;
  double total_cost = 0.0;
};

struct DownsamplingResult {
  RunRecord reference;
  /// Rate 1 first (a single row), then each rate < 1 per schedule in
  /// input order.
  std::vector<DownsamplingRow> rows;
  std::vector<RunRecord> runs;
};

DownsamplingResult run_downsampling_experiment(const DownsamplingSpec& spec,
                                               const ClickStream& stream,
                                               int parallelism);

struct DistillExperimentSpec {
  /// Template: hist_end, online_end, student model. Its start and distill
  /// policy are replaced per run.
  TrialConfig base;
  TeacherSpec teacher;
  /// Student start dates; the earliest gives each set's largest volume.
  std::vector<std::int64_t> start_dates;
  std::vector<DistillPolicy> policies;
  /// Threshold on relative Ranking Loss for the minimal volume.
  double epsilon = kDefaultConvEpsilon;

  void validate() const;
};

struct DistillRow {
  std::string policy;
  std::int64_t start = 0;
  /// Historical examples: hist_end - start.
  std::int64_t volume = 0;
  double final_ranking_loss = 0.0;
  /// Relative to the set's largest-volume run.
  double rel_ranking_loss = 0.0;
  double final_logloss = 0.0;
  std::int64_t examples_distilled = 0;
};

struct DistillPolicySummary {
  std::string policy;
  /// Smallest volume v such that every volume >= v in the set stays within
  /// epsilon of the set's reference.
  std::optional<std::int64_t> min_volume;
};

struct DistillResult {
  /// Policy-major, volumes in descending order within a policy.
  std::vector<DistillRow> rows;
  std::vector<DistillPolicySummary> policies;
  /// 100 * (1 - v_continuous / v_cutover0.8) when both sets converge.
  std::optional<double> saving_percent;
  /// Teacher's own progressive metrics over the students' tail.
  double teacher_final_logloss = 0.0;
  double teacher_final_ranking_loss = 0.0;
  std::optional<CtrModel> teacher_checkpoint;
  std::vector<RunRecord> runs;
};

/// Minimal converging volume per the DistillPolicySummary definition.
/// `volumes` descending, `rel` aligned with it.
std::optional<std::int64_t> minimal_volume(std::span<const std::int64_t> volumes,
                                           std::span<const double> rel,
                                           double epsilon);

/// Trains the shared teacher (or resumes `teacher_checkpoint`, the teacher
/// state at the earliest start date) and runs every (policy, start) pair.
DistillResult run_distill_experiment(
    const DistillExperimentSpec& spec, const ClickStream& stream,
    int parallelism, const CtrModel* teacher_checkpoint = nullptr);

}  // namespace ctrlab
