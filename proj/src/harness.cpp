#include "ctrlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctrlab/datagen.hpp"
#include "ctrlab/metrics.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ctrlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

double accumulate_cost(const CostModel& cost, std::uint64_t param_count,
                       std::int64_t examples_kept) {
  return cost.kappa * static_cast<double>(param_count) *
         static_cast<double>(examples_kept);
}

void TrialConfig::validate() const {
  if (hist_start < 0) throw ConfigError("trial.hist_start", "must be >= 0");
  if (hist_end <= hist_start)
    throw ConfigError("trial.hist_end", "historical range must be nonempty");
  if (online_end < hist_end)
    throw ConfigError("trial.online_end", "must be >= hist_end");
  model.validate();
  if (!(learning_rate > 0.0))
    throw ConfigError("trial.learning_rate", "must be > 0");
  sampler.validate(hist_start, hist_end);
  distill.validate();
  if (distill_reference_start && *distill_reference_start > hist_end)
    throw ConfigError("trial.distill_reference_start", "must be <= hist_end");
  if (window < 1) throw ConfigError("trial.window", "must be >= 1");
  if (timestamps_per_day < 1)
    throw ConfigError("trial.timestamps_per_day", "must be >= 1");
  if (!(conv_epsilon > 0.0))
    throw ConfigError("trial.convergence.epsilon", "must be > 0");
  if (conv_patience < 1)
    throw ConfigError("trial.convergence.patience", "must be >= 1");
  if (!(cost.kappa > 0.0)) throw ConfigError("trial.cost_kappa", "must be > 0");
  if (final_windows < 0)
    throw ConfigError("trial.final_windows", "must be >= 0");
}

std::int64_t TrialConfig::resolved_final_windows() const noexcept {
  const std::int64_t n = window_count();
  return final_windows > 0 ? std::min<std::int64_t>(final_windows, n)
                           : std::max<std::int64_t>(1, n / 10);
}

std::int64_t TrialConfig::tail_start() const noexcept {
  return std::max(hist_start,
                  (last_window() - resolved_final_windows() + 1) * window);
}

RunRecord run_trial(const TrialConfig& cfg, const ClickStream& stream,
                    const TeacherTrace* teacher) {
  cfg.validate();
  if (cfg.distill.enabled()) {
    if (teacher == nullptr)
      throw Error("checkpoint missing: distillation enabled without a teacher");
    if (!teacher->covers(cfg.hist_start) ||
        (cfg.online_end > cfg.hist_start && !teacher->covers(cfg.online_end - 1)))
      throw Error("teacher trace does not cover the trial range");
  }

  CtrModel model(cfg.model, cfg.seed);
  SamplerState state(stream.spec().n_fields, cfg.model.hash.dimension,
                     cfg.sampler.uses_counts());
  const Rng decision_rng(cfg.seed, "sampler.decisions");
  const std::int64_t distill_ref_start =
      cfg.distill_reference_start.value_or(cfg.hist_start);

  RunRecord rec;
  rec.param_count = model.param_count();
  rec.summary.tail_start = cfg.tail_start();

  MetricWindow window, tail;
  std::vector<Example> chunk;
  std::int64_t seen = 0, kept = 0;

  for (std::int64_t lo = cfg.hist_start; lo < cfg.online_end;) {
    const std::int64_t w = lo / cfg.window;
    const std::int64_t hi = std::min(cfg.online_end, (w + 1) * cfg.window);
    stream.generate_into(cfg.model.hash, lo, hi, chunk);
    window.clear();

    for (Example& x : chunk) {
      const std::int64_t t = x.t;
      const bool online = t >= cfg.hist_end;
      PhaseStats& phase = online ? rec.online : rec.historical;
      ++phase.examples;

      const double p = model.predict(x);
      window.add(p, x.label, x.weight);
      if (t >= rec.summary.tail_start) tail.add(p, x.label, x.weight);
      ++seen;

      const SampleDecision d =
          apply(cfg.sampler, state, x, p, t, decision_rng);
      if (d.keep_prob < 1.0) ++phase.downsampling_decisions;
      if (cfg.trace_decisions)
        rec.decisions.push_back({t, x.label, d.keep_prob, d.kept});
      if (!d.kept) continue;

      double target = x.label;
      if (cfg.distill.enabled() &&
          distill_active(cfg.distill, t, distill_ref_start, cfg.hist_end)) {
        target = distill_target(x.label, teacher->at(t), cfg.distill.alpha);
        ++phase.distilled;
      }
      model.grad_step(x, target, cfg.learning_rate);
      ++kept;
      ++phase.kept;
    }

    WindowRow row;
    row.window = w;
    row.t_end = hi;
    row.examples_seen = seen;
    row.examples_kept = kept;
    row.logloss = window.logloss();
    row.ranking_loss = window.ranking_loss();
    row.bias = window.bias();
    row.rel_logloss = kNaN;
    row.cum_cost = accumulate_cost(cfg.cost, rec.param_count, kept);
    rec.rows.push_back(row);
    lo = hi;
  }

  rec.summary.examples_seen = seen;
  rec.summary.examples_kept = kept;
  rec.summary.total_cost = accumulate_cost(cfg.cost, rec.param_count, kept);
  rec.summary.final_logloss = tail.logloss();
  rec.summary.final_ranking_loss = tail.ranking_loss();
  rec.summary.final_bias = tail.bias();
  rec.summary.final_rel_logloss = kNaN;
  return rec;
}

std::vector<RunRecord> run_trials(std::span<const TrialConfig> configs,
                                  const ClickStream& stream,
                                  const TeacherTrace* teacher,
                                  int parallelism) {
  std::vector<RunRecord> out(configs.size());
  std::vector<std::string> errors(configs.size());
  const int threads = std::max(1, parallelism);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(configs.size());
       ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      out[k] = run_trial(configs[k], stream, teacher);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  for (std::size_t k = 0; k < errors.size(); ++k)
    if (!errors[k].empty())
      throw Error("trial " + std::to_string(k) + " failed: " + errors[k]);
  return out;
}

std::optional<std::size_t> detect_convergence(std::span<const double> series,
                                              double epsilon, int patience) {
  if (!(epsilon > 0.0)) throw Error("detect_convergence: epsilon must be > 0");
  if (patience < 1) throw Error("detect_convergence: patience must be >= 1");
  const std::size_t k = static_cast<std::size_t>(patience);
  for (std::size_t w = 0; w + k < series.size(); ++w) {
    if (!std::isfinite(series[w])) continue;
    bool flat = true;
    for (std::size_t j = 1; j <= k && flat; ++j)
      flat = std::isfinite(series[w + j]) &&
             std::abs(series[w + j] - series[w]) < epsilon;
    if (flat) return w;
  }
  return std::nullopt;
}

std::optional<std::size_t> detect_convergence(
    std::span<const double> run_loss, std::span<const double> baseline_loss,
    double epsilon, int patience) {
  if (run_loss.size() != baseline_loss.size())
    throw Error("detect_convergence: series length mismatch (" +
                std::to_string(run_loss.size()) + " vs " +
                std::to_string(baseline_loss.size()) + ")");
  std::vector<double> rel(run_loss.size());
  for (std::size_t i = 0; i < rel.size(); ++i)
    rel[i] = baseline_loss[i] > 0.0
                 ? relative_metric(run_loss[i], baseline_loss[i])
                 : kNaN;
  return detect_convergence(rel, epsilon, patience);
}

void attach_baseline(RunRecord& run, const RunRecord& baseline,
                     double epsilon, int patience) {
  std::vector<double> run_loss, base_loss;
  run_loss.reserve(run.rows.size());
  base_loss.reserve(run.rows.size());
  for (const WindowRow& r : run.rows) {
    auto it = std::lower_bound(
        baseline.rows.begin(), baseline.rows.end(), r.window,
        [](const WindowRow& b, std::int64_t w) { return b.window < w; });
    if (it == baseline.rows.end() || it->window != r.window)
      throw Error("baseline does not cover window " + std::to_string(r.window));
    run_loss.push_back(r.logloss);
    base_loss.push_back(it->logloss);
  }
  for (std::size_t i = 0; i < run.rows.size(); ++i)
    run.rows[i].rel_logloss =
        base_loss[i] > 0.0 ? relative_metric(run_loss[i], base_loss[i]) : kNaN;
  run.summary.convergence_row =
      detect_convergence(run_loss, base_loss, epsilon, patience);
  run.summary.final_rel_logloss =
      run.summary.tail_start == baseline.summary.tail_start &&
              baseline.summary.final_logloss > 0.0
          ? relative_metric(run.summary.final_logloss,
                            baseline.summary.final_logloss)
          : kNaN;
}

TrialConfig prune_start_date(const TrialConfig& cfg,
                             std::int64_t days_since_last_launch) {
  if (days_since_last_launch < 0)
    throw ConfigError("prune.days", "must be >= 0");
  TrialConfig out = cfg;
  const std::int64_t shift = days_since_last_launch * cfg.timestamps_per_day;
  if (cfg.hist_start + shift >= cfg.hist_end)
    throw ConfigError("prune.days", "pruning past the end of history");
  out.hist_start = cfg.hist_start + shift;
  if (auto* c = std::get_if<Cutoff>(&out.sampler.schedule))
    c->t_cut = std::max(c->t_cut, out.hist_start);
  return out;
}

}  // namespace ctrlab
