#include "ctrlab/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctrlab/datagen.hpp"
#include "ctrlab/metrics.hpp"
#include "ctrlab/numeric.hpp"

namespace ctrlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Pins the pooled tail to the template's last windows so runs over different
// ranges are scored on the same timestamps.
void pin_tail(TrialConfig& cfg, const TrialConfig& tmpl) {
  cfg.final_windows = static_cast<int>(tmpl.resolved_final_windows());
}

SweepRow make_row(const PlannedTrial& p, const RunRecord& r) {
  SweepRow row;
  row.model = p.cfg.model.label();
  row.params = r.param_count;
  row.budget = p.budget;
  row.planned_examples = p.planned_examples;
  row.planned_cost = p.planned_cost;
  row.rate = p.rate;
  row.hist_start = p.cfg.hist_start;
  row.examples_kept = r.summary.examples_kept;
  row.realized_cost = r.summary.total_cost;
  row.final_logloss = r.summary.final_logloss;
  row.final_ranking_loss = r.summary.final_ranking_loss;
  row.final_bias = r.summary.final_bias;
  return row;
}

}  // namespace

void IsoComputeSpec::validate() const {
  if (!(budget > 0.0) || !std::isfinite(budget))
    throw ConfigError("isocompute.budgets", "budget must be > 0");
  if (sizes.empty())
    throw ConfigError("isocompute.models", "at least one model size needed");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    sizes[i].validate();
    if (i > 0 && sizes[i].param_count() <= sizes[i - 1].param_count())
      throw ConfigError("isocompute.models",
                        "sizes must be strictly increasing in parameters");
  }
  if (min_examples < 0)
    throw ConfigError("isocompute.min_examples", "must be >= 0");
  base.validate();
}

std::vector<PlannedTrial> plan_iso(const IsoComputeSpec& spec,
                                   const ClickStream& stream) {
  spec.validate();
  const TrialConfig& base = spec.base;
  const double kappa = base.cost.kappa;
  const std::int64_t available = base.online_end - base.hist_start;
  const std::int64_t online_len = base.online_end - base.hist_end;
  LabelCounts counts;
  if (spec.knob == IsoKnob::rate)
    counts = stream.count_labels(base.hist_start, base.online_end);

  std::vector<PlannedTrial> plan;
  for (const ModelArch& arch : spec.sizes) {
    const double params = static_cast<double>(arch.param_count());
    const double n = spec.budget / (kappa * params);
    const auto planned = static_cast<std::int64_t>(std::llround(n));
    const std::string who = "budget " + format_real(spec.budget) + ", model " +
                            arch.label() + ": ";
    const std::int64_t floor =
        spec.knob == IsoKnob::rate
            ? std::max(spec.min_examples, counts.positives + 1)
            : std::max(spec.min_examples, online_len + 1);
    if (planned < floor)
      throw BudgetError("isocompute.budgets",
                        who + "budget too small: " + std::to_string(planned) +
                            " examples planned, at least " +
                            std::to_string(floor) + " needed");
    if (planned > available)
      throw BudgetError("isocompute.budgets",
                        who + "budget needs " + std::to_string(planned) +
                            " examples but the range holds " +
                            std::to_string(available));

    PlannedTrial p;
    p.cfg = base;
    p.cfg.model = arch;
    p.budget = spec.budget;
    p.planned_examples = planned;
    p.planned_cost = kappa * params * static_cast<double>(planned);
    p.cfg.distill = DistillPolicy{};
    if (spec.knob == IsoKnob::rate) {
      p.rate = counts.negatives > 0
                   ? std::min(1.0, static_cast<double>(planned - counts.positives) /
                                       static_cast<double>(counts.negatives))
                   : 1.0;
      p.cfg.sampler = SamplerPolicy{UniformNegative{p.rate}, Continuous{}};
    } else {
      p.rate = 1.0;
      p.cfg.sampler = SamplerPolicy{};
      p.cfg.hist_start = base.online_end - planned;
    }
    pin_tail(p.cfg, base);
    plan.push_back(std::move(p));
  }
  return plan;
}

void summarize_sweep(SweepResult& result) {
  if (result.rows.size() < 3)
    throw Error("sweep needs at least 3 configurations, got " +
                std::to_string(result.rows.size()));
  std::size_t best = 0;
  for (std::size_t i = 1; i < result.rows.size(); ++i)
    if (result.rows[i].final_logloss < result.rows[best].final_logloss)
      best = i;
  result.argmin = best;
  result.boundary = best == 0 || best + 1 == result.rows.size();
}

SweepResult run_sweep(std::span<const PlannedTrial> plan,
                      const ClickStream& stream, int parallelism) {
  std::vector<TrialConfig> cfgs;
  for (const PlannedTrial& p : plan) cfgs.push_back(p.cfg);
  std::vector<RunRecord> runs;
  try {
    runs = run_trials(cfgs, stream, nullptr, parallelism);
  } catch (const Error& e) {
    throw Error(std::string("sweep: ") + e.what());
  }
  SweepResult res;
  res.budget = plan.empty() ? 0.0 : plan.front().budget;
  std::vector<std::size_t> order(plan.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return runs[a].param_count < runs[b].param_count;
  });
  for (std::size_t i : order) {
    res.rows.push_back(make_row(plan[i], runs[i]));
    runs[i].name = plan[i].cfg.model.label();
    res.runs.push_back(std::move(runs[i]));
  }
  summarize_sweep(res);
  return res;
}

std::vector<SweepResult> run_sweeps(std::span<const IsoComputeSpec> specs,
                                    const ClickStream& stream,
                                    int parallelism) {
  std::vector<std::vector<PlannedTrial>> plans;
  std::vector<TrialConfig> cfgs;
  for (const IsoComputeSpec& s : specs) {
    plans.push_back(plan_iso(s, stream));
    for (const PlannedTrial& p : plans.back()) cfgs.push_back(p.cfg);
  }
  std::vector<RunRecord> runs;
  try {
    runs = run_trials(cfgs, stream, nullptr, parallelism);
  } catch (const Error& e) {
    throw Error(std::string("sweep: ") + e.what());
  }
  std::vector<SweepResult> out;
  std::size_t k = 0;
  for (const auto& plan : plans) {
    SweepResult res;
    res.budget = plan.front().budget;
    for (const PlannedTrial& p : plan) {
      res.rows.push_back(make_row(p, runs[k]));
      runs[k].name = p.cfg.model.label();
      res.runs.push_back(std::move(runs[k]));
      ++k;
    }
    summarize_sweep(res);
    out.push_back(std::move(res));
  }
  return out;
}

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::continuous ? "continuous" : "cutoff";
}

void DownsamplingSpec::validate() const {
  base.validate();
  if (rates.empty() || std::find(rates.begin(), rates.end(), 1.0) == rates.end())
    throw ConfigError("downsampling.rates", "must include the rate 1 baseline");
  for (double r : rates)
    if (!(r > 0.0 && r <= 1.0))
      throw ConfigError("downsampling.rates", "rates must lie in (0,1]");
  if (schedules.empty())
    throw ConfigError("downsampling.schedules", "at least one schedule needed");
  if (!(cutoff_fraction > 0.0 && cutoff_fraction < 1.0))
    throw ConfigError("downsampling.cutoff_fraction", "must be in (0,1)");
  if (baseline_start < 0 || baseline_start > base.hist_start)
    throw ConfigError("downsampling.baseline_start",
                      "must lie in [0, trial.hist_start]");
}

DownsamplingResult run_downsampling_experiment(const DownsamplingSpec& spec,
                                               const ClickStream& stream,
                                               int parallelism) {
  spec.validate();
  TrialConfig base = spec.base;
  base.sampler = SamplerPolicy{};
  base.distill = DistillPolicy{};
  pin_tail(base, spec.base);

  TrialConfig ref = base;
  ref.hist_start = spec.baseline_start;

  const std::int64_t t_cut =
      base.hist_start +
      static_cast<std::int64_t>(std::llround(
          spec.cutoff_fraction * static_cast<double>(base.hist_end - base.hist_start)));

  std::vector<TrialConfig> cfgs = {ref, base};
  std::vector<DownsamplingRow> rows(1);
  rows[0].name = "rate-1";
  for (double r : spec.rates) {
    if (r == 1.0) continue;
    for (ScheduleKind k : spec.schedules) {
      TrialConfig c = base;
      c.sampler.signal = UniformNegative{r};
      if (k == ScheduleKind::cutoff)
        c.sampler.schedule = Cutoff{t_cut};
      cfgs.push_back(c);
      DownsamplingRow row;
      row.rate = r;
      row.schedule = k;
      row.name = "rate-" + format_real(r) + "-" + to_string(k);
      rows.push_back(row);
    }
  }

  std::vector<RunRecord> runs = run_trials(cfgs, stream, nullptr, parallelism);
  DownsamplingResult res;
  res.reference = std::move(runs[0]);
  res.reference.name = "reference";
  attach_baseline(res.reference, res.reference, base.conv_epsilon,
                  base.conv_patience);
  const double full_loss = runs[1].summary.final_logloss;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    RunRecord& r = runs[i + 1];
    r.name = rows[i].name;
    attach_baseline(r, res.reference, base.conv_epsilon, base.conv_patience);
    DownsamplingRow& row = rows[i];
    if (r.summary.convergence_row) {
      const WindowRow& w = r.rows[*r.summary.convergence_row];
      row.convergence_window = w.window;
      row.convergence_seen = w.examples_seen;
      row.convergence_kept = w.examples_kept;
    }
    row.final_rel_logloss = r.summary.final_rel_logloss;
    row.final_rel_vs_full =
        full_loss > 0.0 ? relative_metric(r.summary.final_logloss, full_loss)
                        : kNaN;
    row.final_logloss = r.summary.final_logloss;
    row.final_ranking_loss = r.summary.final_ranking_loss;
    row.final_bias = r.summary.final_bias;
    row.examples_kept = r.summary.examples_kept;
    row.total_cost = r.summary.total_cost;
    res.runs.push_back(std::move(r));
  }
  res.rows = std::move(rows);
  return res;
}

void DistillExperimentSpec::validate() const {
  base.validate();
  teacher.validate();
  teacher.validate_against(base.model);
  if (start_dates.empty())
    throw ConfigError("distill.start_dates", "at least one start date needed");
  for (std::size_t i = 0; i < start_dates.size(); ++i) {
    if (start_dates[i] < 0 || start_dates[i] >= base.hist_end)
      throw ConfigError("distill.start_dates",
                        "start dates must lie in [0, trial.hist_end)");
    if (i > 0 && start_dates[i] <= start_dates[i - 1])
      throw ConfigError("distill.start_dates", "must be strictly increasing");
  }
  if (teacher.start >= start_dates.front())
    throw ConfigError("distill.teacher.start",
                      "teacher must start before every student");
  if (policies.empty())
    throw ConfigError("distill.policies", "at least one policy needed");
  for (const DistillPolicy& p : policies) p.validate();
  if (!(epsilon > 0.0)) throw ConfigError("distill.epsilon", "must be > 0");
}

std::optional<std::int64_t> minimal_volume(std::span<const std::int64_t> volumes,
                                           std::span<const double> rel,
                                           double epsilon) {
  if (volumes.size() != rel.size())
    throw Error("minimal_volume: length mismatch");
  std::optional<std::int64_t> best;
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    if (!(rel[i] <= epsilon)) break;
    best = volumes[i];
  }
  return best;
}

DistillResult run_distill_experiment(const DistillExperimentSpec& spec,
                                     const ClickStream& stream,
                                     int parallelism,
                                     const CtrModel* teacher_checkpoint) {
  spec.validate();
  const std::int64_t first = spec.start_dates.front();
  TrialConfig tmpl = spec.base;
  tmpl.hist_start = first;
  tmpl.sampler = SamplerPolicy{};

  const TeacherTrace trace =
      teacher_checkpoint
          ? continue_teacher(*teacher_checkpoint, spec.teacher, stream, first,
                             tmpl.online_end)
          : train_teacher(spec.teacher, stream, first, tmpl.online_end);

  std::vector<TrialConfig> cfgs;
  for (const DistillPolicy& pol : spec.policies)
    for (std::int64_t s : spec.start_dates) {
      TrialConfig c = tmpl;
      c.hist_start = s;
      c.distill = pol;
      c.distill_reference_start = first;
      pin_tail(c, tmpl);
      cfgs.push_back(c);
    }
  std::vector<RunRecord> runs = run_trials(cfgs, stream, &trace, parallelism);

  DistillResult res;
  const std::size_t nv = spec.start_dates.size();
  std::vector<std::int64_t> volumes(nv);
  for (std::size_t i = 0; i < nv; ++i)
    volumes[i] = tmpl.hist_end - spec.start_dates[i];

  for (std::size_t p = 0; p < spec.policies.size(); ++p) {
    const std::string name = spec.policies[p].describe();
    const double ref_rl = runs[p * nv].summary.final_ranking_loss;
    std::vector<double> rel(nv);
    for (std::size_t i = 0; i < nv; ++i) {
      RunRecord& r = runs[p * nv + i];
      r.name = name + "-start" + std::to_string(spec.start_dates[i]);
      DistillRow row;
      row.policy = name;
      row.start = spec.start_dates[i];
      row.volume = volumes[i];
      row.final_ranking_loss = r.summary.final_ranking_loss;
      row.rel_ranking_loss =
          ref_rl > 0.0 ? relative_metric(row.final_ranking_loss, ref_rl) : kNaN;
      row.final_logloss = r.summary.final_logloss;
      row.examples_distilled = r.historical.distilled + r.online.distilled;
      rel[i] = row.rel_ranking_loss;
      res.rows.push_back(row);
    }
    res.policies.push_back({name, minimal_volume(volumes, rel, spec.epsilon)});
  }

  auto find = [&](const std::string& n) -> const DistillPolicySummary* {
    for (const auto& s : res.policies)
      if (s.policy == n) return &s;
    return nullptr;
  };
  const auto* cont = find("continuous");
  const auto* cut = find("cutover-0.8");
  if (cont && cut && cont->min_volume && cut->min_volume)
    res.saving_percent =
        100.0 * (1.0 - static_cast<double>(*cont->min_volume) /
                           static_cast<double>(*cut->min_volume));

  MetricWindow tail;
  const std::int64_t tail_start = tmpl.tail_start();
  std::vector<Example> chunk;
  stream.generate_into(spec.teacher.arch.hash, tail_start, tmpl.online_end,
                       chunk);
  for (const Example& x : chunk) tail.add(trace.at(x.t), x.label, x.weight);
  res.teacher_final_logloss = tail.logloss();
  res.teacher_final_ranking_loss = tail.ranking_loss();
  res.teacher_checkpoint = trace.checkpoint;
  res.runs = std::move(runs);
  return res;
}

}  // namespace ctrlab
