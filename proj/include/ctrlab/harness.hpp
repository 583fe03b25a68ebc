#pragma once

// One training trial: a single chronological pass over the historical range
// followed by the online range. Every example is scored before the model
// trains on it (progressive validation) and metrics are always taken on the
// raw, unsampled stream; downsampling only changes what the model trains on.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctrlab/distill.hpp"
#include "ctrlab/model.hpp"
#include "ctrlab/sampling.hpp"

namespace ctrlab {

class ClickStream;

inline constexpr double kDefaultConvEpsilon = 0.002;
inline constexpr int kDefaultConvPatience = 5;
inline constexpr std::int64_t kDefaultWindow = 10'000;

struct CostModel {
  /// Compute units per parameter per trained example.
  double kappa = 1.0;
};

/// kappa * param_count * examples_kept. Dropped examples cost nothing.
double accumulate_cost(const CostModel& cost, std::uint64_t param_count,
                       std::int64_t examples_kept);

struct TrialConfig {
  std::int64_t hist_start = 0;
  std::int64_t hist_end = 0;
  std::int64_t online_end = 0;

  ModelArch model;
  double learning_rate = kDefaultLearningRate;
  /// Keys model init and sampler decisions.
  std::uint64_t seed = 1;

  SamplerPolicy sampler;
  DistillPolicy distill;
  /// Historical range the cutover fraction refers to; defaults to this
  /// trial's own [hist_start, hist_end).
  std::optional<std::int64_t> distill_reference_start;

  std::int64_t window = kDefaultWindow;
  std::int64_t timestamps_per_day = kDefaultWindow;
  double conv_epsilon = kDefaultConvEpsilon;
  int conv_patience = kDefaultConvPatience;
  CostModel cost;
  /// Trailing windows pooled for the final summary; 0 means 10% of the
  /// run's windows (at least one).
  int final_windows = 0;
  bool trace_decisions = false;

  void validate() const;
  std::int64_t first_window() const noexcept { return hist_start / window; }
  std::int64_t last_window() const noexcept {
    return (online_end - 1) / window;
  }
  std::int64_t window_count() const noexcept {
    return last_window() - first_window() + 1;
  }
  /// final_windows with the 10% default applied.
  std::int64_t resolved_final_windows() const noexcept;
  /// First timestamp of the pooled final segment.
  std::int64_t tail_start() const noexcept;
};

struct WindowRow {
  /// Absolute window index: the row covers timestamps in
  /// [window * W, (window + 1) * W) intersected with the trial range.
  std::int64_t window = 0;
  std::int64_t t_end = 0;
  std::int64_t examples_seen = 0;
  std::int64_t examples_kept = 0;
  double logloss = 0.0;
  double ranking_loss = 0.0;
  double bias = 0.0;
  double rel_logloss = 0.0;
  double cum_cost = 0.0;
};

struct DecisionRecord {
  std::int64_t t = 0;
  std::uint8_t label = 0;
  double keep_prob = 1.0;
  bool kept = true;
};

/// Sampler instrumentation per phase.
struct PhaseStats {
  std::int64_t examples = 0;
  std::int64_t downsampling_decisions = 0;  // decisions with keep_prob < 1
  std::int64_t kept = 0;
  std::int64_t distilled = 0;
};

struct RunSummary {
  std::int64_t examples_seen = 0;
  std::int64_t examples_kept = 0;
  double total_cost = 0.0;
  std::int64_t tail_start = 0;
  double final_logloss = 0.0;
  double final_ranking_loss = 0.0;
  double final_bias = 0.0;
  /// Relative to the attached baseline's pooled tail; NaN without baseline.
  double final_rel_logloss = 0.0;
  std::optional<std::size_t> convergence_row;
};

struct RunRecord {
  std::string name;
  std::vector<WindowRow> rows;
  RunSummary summary;
  PhaseStats historical;
  PhaseStats online;
  std::vector<DecisionRecord> decisions;
  std::uint64_t param_count = 0;
};

/// Runs one trial. `teacher` is required when cfg.distill is enabled and
/// must cover [hist_start, online_end).
RunRecord run_trial(const TrialConfig& cfg, const ClickStream& stream,
                    const TeacherTrace* teacher = nullptr);

/// Trials are independent; runs them with up to `parallelism` threads.
/// Output order matches input order.
std::vector<RunRecord> run_trials(std::span<const TrialConfig> configs,
                                  const ClickStream& stream,
                                  const TeacherTrace* teacher,
                                  int parallelism);

/// First window w such that each of the K following windows differs from
/// series[w] by less than epsilon in absolute value.
std::optional<std::size_t> detect_convergence(std::span<const double> series,
                                              double epsilon, int patience);

/// Relative-to-baseline variant; throws Error on length mismatch.
std::optional<std::size_t> detect_convergence(
    std::span<const double> run_loss, std::span<const double> baseline_loss,
    double epsilon, int patience);

/// Fills rel_logloss per window against `baseline` (matched by window
/// index), the pooled final relative logloss, and the convergence row.
void attach_baseline(RunRecord& run, const RunRecord& baseline,
                     double epsilon, int patience);

/// Moves the historical start date forward by whole days.
TrialConfig prune_start_date(const TrialConfig& cfg,
                             std::int64_t days_since_last_launch);

}  // namespace ctrlab
