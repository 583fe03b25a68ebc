#include "ctrlab/app.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "CLI11.hpp"

#include "ctrlab/datagen.hpp"
#include "ctrlab/io.hpp"
#include "ctrlab/numeric.hpp"

namespace ctrlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Production-scale data saving of continuous distillation over a cutover
// at 80% of history; printed next to the measured value for comparison.
constexpr double kReferenceSavingPercent = 35.0;

json real_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json phase_json(const PhaseStats& p) {
  return {{"examples", p.examples},
          {"downsampling_decisions", p.downsampling_decisions},
          {"kept", p.kept},
          {"distilled", p.distilled}};
}

json run_json(const RunRecord& r, const std::string& file) {
  json j = {{"name", r.name},
            {"file", file},
            {"param_count", r.param_count},
            {"windows", r.rows.size()},
            {"examples_seen", r.summary.examples_seen},
            {"examples_kept", r.summary.examples_kept},
            {"total_cost", r.summary.total_cost},
            {"tail_start", r.summary.tail_start},
            {"final_logloss", real_or_null(r.summary.final_logloss)},
            {"final_ranking_loss", real_or_null(r.summary.final_ranking_loss)},
            {"final_bias", real_or_null(r.summary.final_bias)},
            {"final_rel_logloss", real_or_null(r.summary.final_rel_logloss)},
            {"historical", phase_json(r.historical)},
            {"online", phase_json(r.online)}};
  if (r.summary.convergence_row) {
    const WindowRow& w = r.rows[*r.summary.convergence_row];
    j["convergence"] = {{"window", w.window},
                        {"examples_seen", w.examples_seen},
                        {"examples_kept", w.examples_kept}};
  } else {
    j["convergence"] = nullptr;
  }
  return j;
}

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.')
               ? c
               : '_';
  return out;
}

// Writes a run's metrics (and decision trace when recorded) under `dir` and
// returns its summary entry.
json save_run(const fs::path& root, const std::string& rel,
              const RunRecord& r) {
  std::ostringstream csv;
  write_metrics_csv(csv, r);
  write_text_file(root / rel, csv.str());
  json j = run_json(r, rel);
  if (!r.decisions.empty()) {
    std::ostringstream d;
    write_decisions_csv(d, r);
    std::string drel = rel.substr(0, rel.size() - 4) + ".decisions.csv";
    write_text_file(root / drel, d.str());
    j["decisions_file"] = drel;
  }
  return j;
}

json base_summary(const ExperimentFile& cfg, const ClickStream& stream) {
  return {{"schema_version", kSchemaVersion},
          {"tool", "ctrlab"},
          {"kind", to_string(cfg.kind)},
          {"config", config_echo(cfg)},
          {"stream", {{"intercept", stream.intercept()}}}};
}

void run_single(const ExperimentFile& cfg, const ClickStream& stream,
                const fs::path& dir, json& summary, std::ostream& log) {
  RunRecord r = run_trial(cfg.trial, stream);
  r.name = "run";
  summary["runs"] = json::array({save_run(dir, "metrics.csv", r)});
  log << "run: " << r.summary.examples_seen << " examples, "
      << r.summary.examples_kept << " kept, final logloss "
      << format_real(r.summary.final_logloss) << ", bias "
      << format_real(r.summary.final_bias) << '\n';
}

void run_downsampling(const ExperimentFile& cfg, const ClickStream& stream,
                      const fs::path& dir, json& summary, std::ostream& log) {
  const DownsamplingResult res =
      run_downsampling_experiment(cfg.downsampling, stream, cfg.parallelism);
  fs::create_directories(dir / "runs");
  json runs = json::array();
  runs.push_back(save_run(dir, "runs/reference.csv", res.reference));
  for (const RunRecord& r : res.runs)
    runs.push_back(save_run(dir, "runs/" + slug(r.name) + ".csv", r));
  summary["runs"] = runs;

  std::ostringstream csv;
  write_downsampling_csv(csv, res);
  write_text_file(dir / "downsampling.csv", csv.str());

  json rows = json::array();
  for (const DownsamplingRow& d : res.rows) {
    json row = {{"run", d.name},
                {"rate", d.rate},
                {"schedule", to_string(d.schedule)},
                {"final_rel_logloss_vs_baseline", real_or_null(d.final_rel_logloss)},
                {"final_rel_logloss_vs_full_rate", real_or_null(d.final_rel_vs_full)},
                {"final_logloss", real_or_null(d.final_logloss)},
                {"final_ranking_loss", real_or_null(d.final_ranking_loss)},
                {"final_bias", real_or_null(d.final_bias)},
                {"examples_kept", d.examples_kept},
                {"total_cost", d.total_cost}};
    if (d.convergence_window)
      row["convergence"] = {{"window", *d.convergence_window},
                            {"examples_seen", d.convergence_seen},
                            {"examples_kept", d.convergence_kept}};
    else
      row["convergence"] = nullptr;
    rows.push_back(row);
  }
  summary["downsampling"] = {{"table", "downsampling.csv"},
                             {"reference_run", "reference"},
                             {"rows", rows}};
  log << "downsampling: " << res.rows.size() << " runs plus reference\n";
}

void run_distill(const ExperimentFile& cfg, const ClickStream& stream,
                 const fs::path& dir, json& summary, std::ostream& log) {
  std::optional<CtrModel> ckpt;
  if (cfg.distill.teacher_checkpoint)
    ckpt = CtrModel::load_file(*cfg.distill.teacher_checkpoint);
  const DistillResult res = run_distill_experiment(
      cfg.distill.spec, stream, cfg.parallelism, ckpt ? &*ckpt : nullptr);
  fs::create_directories(dir / "runs");
  json runs = json::array();
  for (const RunRecord& r : res.runs)
    runs.push_back(save_run(dir, "runs/" + slug(r.name) + ".csv", r));
  summary["runs"] = runs;
  if (res.teacher_checkpoint) res.teacher_checkpoint->save_file((dir / "teacher.ckpt").string());

  std::ostringstream csv;
  write_distill_csv(csv, res);
  write_text_file(dir / "distill.csv", csv.str());

  json rows = json::array();
  for (const DistillRow& d : res.rows)
    rows.push_back({{"policy", d.policy},
                    {"start", d.start},
                    {"volume", d.volume},
                    {"final_ranking_loss", real_or_null(d.final_ranking_loss)},
                    {"rel_ranking_loss", real_or_null(d.rel_ranking_loss)},
                    {"final_logloss", real_or_null(d.final_logloss)},
                    {"examples_distilled", d.examples_distilled}});
  json pols = json::array();
  for (const DistillPolicySummary& p : res.policies)
    pols.push_back({{"policy", p.policy},
                    {"min_volume", p.min_volume ? json(*p.min_volume) : json(nullptr)}});
  summary["distill"] = {
      {"table", "distill.csv"},
      {"teacher_checkpoint", "teacher.ckpt"},
      {"teacher_final_logloss", real_or_null(res.teacher_final_logloss)},
      {"teacher_final_ranking_loss", real_or_null(res.teacher_final_ranking_loss)},
      {"epsilon", cfg.distill.spec.epsilon},
      {"rows", rows},
      {"policies", pols},
      {"saving_percent_continuous_vs_cutover_0.8",
       res.saving_percent ? json(*res.saving_percent) : json(nullptr)},
      {"reference_saving_percent", kReferenceSavingPercent}};
  log << "distill: " << res.rows.size() << " student runs\n";
}

void run_isocompute(const ExperimentFile& cfg, const ClickStream& stream,
                    const fs::path& dir, json& summary, std::ostream& log) {
  const std::vector<IsoComputeSpec> specs = cfg.iso_specs();
  const std::vector<SweepResult> sweeps = run_sweeps(specs, stream, cfg.parallelism);
  fs::create_directories(dir / "runs");
  json runs = json::array();
  json out = json::array();
  for (std::size_t b = 0; b < sweeps.size(); ++b) {
    const SweepResult& s = sweeps[b];
    json rows = json::array();
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
      const SweepRow& r = s.rows[i];
      RunRecord rec = s.runs[i];
      rec.name = "b" + std::to_string(b) + "-" + r.model;
      runs.push_back(save_run(dir, "runs/" + slug(rec.name) + ".csv", rec));
      rows.push_back({{"model", r.model},
                      {"params", r.params},
                      {"planned_examples", r.planned_examples},
                      {"planned_cost", r.planned_cost},
                      {"rate", r.rate},
                      {"hist_start", r.hist_start},
                      {"examples_kept", r.examples_kept},
                      {"realized_cost", r.realized_cost},
                      {"final_logloss", real_or_null(r.final_logloss)},
                      {"final_ranking_loss", real_or_null(r.final_ranking_loss)},
                      {"final_bias", real_or_null(r.final_bias)}});
    }
    const SweepRow& best = s.rows[s.argmin];
    out.push_back({{"budget", s.budget},
                   {"argmin_model", best.model},
                   {"argmin_params", best.params},
                   {"boundary", s.boundary},
                   {"rows", rows}});
    log << "isocompute: budget " << format_real(s.budget) << " argmin "
        << best.model << (s.boundary ? " (boundary)" : " (interior)") << '\n';
  }
  summary["runs"] = runs;
  std::ostringstream csv;
  write_isocompute_csv(csv, sweeps);
  write_text_file(dir / "isocompute.csv", csv.str());
  summary["isocompute"] = {{"table", "isocompute.csv"}, {"sweeps", out}};
}

// ---- report ----

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

std::string tidy_csv(const std::vector<Series>& series) {
  std::ostringstream os;
  os << "series,x,y\n";
  for (const Series& s : series)
    for (const auto& [x, y] : s.points)
      os << s.name << ',' << format_real(x) << ',' << format_real(y) << '\n';
  return os.str();
}

double num(const json& j) {
  return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

std::string fmt(double v, int digits = 4) {
  if (!std::isfinite(v)) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string pct(double rel) {
  if (!std::isfinite(rel)) return "n/a";
  std::ostringstream os;
  os << std::showpos << std::fixed << std::setprecision(2) << 100.0 * rel << '%';
  return os.str();
}

std::vector<WindowRow> load_rows(const fs::path& dir, const json& run) {
  const std::string rel = run.at("file").get<std::string>();
  std::istringstream is(read_text_file(dir / rel));
  return read_metrics_csv(is, rel);
}

}  // namespace

void apply_overrides(ExperimentFile& cfg, const RunOptions& opt) {
  if (opt.seed_override) cfg.set_seed(*opt.seed_override);
  if (opt.parallelism) {
    if (*opt.parallelism < 1) throw ConfigError("parallelism", "must be >= 1");
    cfg.parallelism = *opt.parallelism;
  }
  if (!opt.out.empty()) cfg.output_dir = opt.out;
}

fs::path cmd_gen(const ExperimentFile& cfg_in, const RunOptions& opt,
                 std::ostream& log) {
  ExperimentFile cfg = cfg_in;
  apply_overrides(cfg, opt);
  if (opt.out.empty()) throw ConfigError("out", "gen needs --out FILE");
  const fs::path target = opt.out;
  if (fs::exists(target) && !opt.force)
    throw OutputExists("output exists: " + target.string() +
                       " (pass --force to overwrite)");
  const ClickStream stream(cfg.stream);
  const std::int64_t a = cfg.trial.hist_start, b = cfg.trial.online_end;
  fs::path tmp = target;
  tmp += ".partial";
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    stream.export_records(os, cfg.trial.model.hash, a, b);
    os.close();
    if (!os) {
      fs::remove(tmp);
      throw Error("write failed: " + tmp.string());
    }
  }
  fs::rename(tmp, target);
  const LabelCounts c = stream.count_labels(a, b);
  const double rate = c.total() > 0 ? static_cast<double>(c.positives) /
                                          static_cast<double>(c.total())
                                    : 0.0;
  log << "examples " << c.total() << '\n'
      << "positives " << c.positives << '\n'
      << "positive_rate " << format_real(rate) << '\n'
      << "base_ctr " << format_real(cfg.stream.base_ctr) << '\n';
  return target;
}

fs::path cmd_run(const ExperimentFile& cfg_in, const RunOptions& opt,
                 std::ostream& log) {
  ExperimentFile cfg = cfg_in;
  apply_overrides(cfg, opt);
  cfg.validate();
  if (cfg.output_dir.empty())
    throw ConfigError("output_dir", "not set (use output_dir or --out)");
  const fs::path target = cfg.output_dir;
  StagingDir staging(target, opt.force);
  const fs::path& dir = staging.path();

  const ClickStream stream(cfg.stream);
  json summary = base_summary(cfg, stream);
  switch (cfg.kind) {
    case ExperimentKind::single: run_single(cfg, stream, dir, summary, log); break;
    case ExperimentKind::downsampling: run_downsampling(cfg, stream, dir, summary, log); break;
    case ExperimentKind::distill: run_distill(cfg, stream, dir, summary, log); break;
    case ExperimentKind::isocompute: run_isocompute(cfg, stream, dir, summary, log); break;
  }
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");
  staging.commit();
  log << "wrote " << target.string() << '\n';
  return target;
}

fs::path cmd_report(const fs::path& dir, std::ostream& log) {
  fs::path partial = dir;
  partial += ".partial";
  if (fs::exists(partial) && !fs::exists(dir / "summary.json"))
    throw IncompleteRun("run in " + dir.string() + " did not complete");
  if (!fs::is_directory(dir))
    throw IncompleteRun("no run directory at " + dir.string());
  json summary;
  try {
    summary = json::parse(read_text_file(dir / "summary.json"));
  } catch (const json::parse_error& e) {
    throw IncompleteRun("summary.json unreadable: " + std::string(e.what()));
  }
  if (!summary.contains("schema_version") ||
      summary["schema_version"] != kSchemaVersion || !summary.contains("kind") ||
      !summary.contains("runs"))
    throw IncompleteRun("summary.json lacks required fields or has another schema");

  const std::string kind = summary["kind"].get<std::string>();
  StagingDir staging(dir / "report", true);
  const fs::path& out = staging.path();
  std::ostringstream txt;
  txt << "kind: " << kind << '\n';
  json files = json::array();

  if (kind == "single" || kind == "downsampling") {
    std::vector<Series> fig1;
    for (const json& r : summary["runs"]) {
      Series s{r["name"].get<std::string>(), {}};
      for (const WindowRow& w : load_rows(dir, r))
        s.points.emplace_back(static_cast<double>(w.examples_seen), w.logloss);
      fig1.push_back(std::move(s));
    }
    write_text_file(out / "fig1_accuracy_vs_data.csv", tidy_csv(fig1));
    files.push_back("fig1_accuracy_vs_data.csv");
  }

  if (kind == "single") {
    const json& r = summary["runs"][0];
    txt << "examples seen " << r["examples_seen"] << ", kept " << r["examples_kept"]
        << '\n'
        << "final logloss " << fmt(num(r["final_logloss"]), 5)
        << ", ranking loss " << fmt(num(r["final_ranking_loss"]))
        << ", bias " << fmt(num(r["final_bias"])) << '\n'
        << "total cost " << format_real(num(r["total_cost"])) << '\n';
  } else if (kind == "downsampling") {
    std::vector<Series> fig2;
    for (const json& r : summary["runs"]) {
      if (r["name"] == "reference") continue;
      Series s{r["name"].get<std::string>(), {}};
      for (const WindowRow& w : load_rows(dir, r))
        s.points.emplace_back(static_cast<double>(w.examples_kept), w.rel_logloss);
      fig2.push_back(std::move(s));
    }
    write_text_file(out / "fig2_convergence.csv", tidy_csv(fig2));
    files.push_back("fig2_convergence.csv");
    const json& rows = summary["downsampling"]["rows"];
    double full_kept = std::numeric_limits<double>::quiet_NaN();
    for (const json& row : rows)
      if (row["rate"] == 1.0 && row["convergence"].is_object())
        full_kept = num(row["convergence"]["examples_kept"]);
    txt << "convergence point per run (kept examples; ratio to rate 1):\n";
    for (const json& row : rows) {
      txt << "  " << std::left << std::setw(28) << row["run"].get<std::string>();
      if (row["convergence"].is_object()) {
        const double k = num(row["convergence"]["examples_kept"]);
        txt << " window " << row["convergence"]["window"] << ", kept "
            << format_real(k) << ", ratio " << fmt(k / full_kept, 3);
      } else {
        txt << " not converged";
      }
      txt << ", final logloss vs rate 1 "
          << pct(num(row["final_rel_logloss_vs_full_rate"]))
          << ", vs reference " << pct(num(row["final_rel_logloss_vs_baseline"]))
          << ", bias " << fmt(num(row["final_bias"])) << '\n';
    }
  } else if (kind == "distill") {
    const json& d = summary["distill"];
    std::vector<Series> fig3;
    for (const json& row : d["rows"]) {
      const std::string p = row["policy"].get<std::string>();
      if (fig3.empty() || fig3.back().name != p) fig3.push_back({p, {}});
      fig3.back().points.emplace_back(num(row["volume"]), num(row["rel_ranking_loss"]));
    }
    write_text_file(out / "fig3_distillation.csv", tidy_csv(fig3));
    files.push_back("fig3_distillation.csv");
    txt << "teacher final ranking loss " << fmt(num(d["teacher_final_ranking_loss"]))
        << ", logloss " << fmt(num(d["teacher_final_logloss"]), 5) << '\n'
        << "minimal volume with relative ranking loss <= "
        << format_real(num(d["epsilon"])) << ":\n";
    for (const json& p : d["policies"])
      txt << "  " << std::left << std::setw(14) << p["policy"].get<std::string>() << ' '
          << (p["min_volume"].is_null() ? std::string("none")
                                        : format_real(num(p["min_volume"])))
          << '\n';
    const json& s = d["saving_percent_continuous_vs_cutover_0.8"];
    txt << "data saving, continuous vs cutover-0.8: "
        << (s.is_null() ? std::string("n/a") : fmt(num(s), 1) + "%")
        << " (production-scale reference: " << fmt(num(d["reference_saving_percent"]), 0)
        << "%)\n";
  } else if (kind == "isocompute") {
    std::vector<Series> fig4;
    for (const json& sw : summary["isocompute"]["sweeps"]) {
      Series s{"budget=" + format_real(num(sw["budget"])), {}};
      for (const json& row : sw["rows"])
        s.points.emplace_back(num(row["params"]), num(row["final_logloss"]));
      fig4.push_back(std::move(s));
      txt << "budget " << format_real(num(sw["budget"])) << ": argmin "
          << sw["argmin_model"].get<std::string>() << " ("
          << sw["argmin_params"] << " params), "
          << (sw["boundary"].get<bool>() ? "at the boundary" : "interior valley")
          << '\n';
      for (const json& row : sw["rows"])
        txt << "  " << std::left << std::setw(16) << row["model"].get<std::string>()
            << " examples " << row["planned_examples"] << ", rate "
            << fmt(num(row["rate"])) << ", final logloss "
            << fmt(num(row["final_logloss"]), 5) << '\n';
    }
    write_text_file(out / "fig4_isocompute.csv", tidy_csv(fig4));
    files.push_back("fig4_isocompute.csv");
  } else {
    throw IncompleteRun("unknown experiment kind \"" + kind + "\"");
  }

  write_text_file(out / "report.txt", txt.str());
  files.push_back("report.txt");
  json index = {{"schema_version", kSchemaVersion}, {"kind", kind}, {"files", files}};
  write_text_file(out / "report.json", index.dump(2) + "\n");
  staging.commit();
  log << txt.str();
  return dir / "report";
}

json error_json(const std::string& type, const std::string& message,
                const std::string& key) {
  json e = {{"type", type}, {"message", message}};
  if (!key.empty()) e["key"] = key;
  return {{"schema_version", kSchemaVersion}, {"error", e}};
}

int classify_error(const std::exception& e, json& out) {
  if (const auto* c = dynamic_cast<const ConfigError*>(&e)) {
    out = error_json("config", c->what(), c->key());
    return kExitConfig;
  }
  if (dynamic_cast<const OutputExists*>(&e)) {
    out = error_json("output_exists", e.what());
    return kExitOutputExists;
  }
  if (dynamic_cast<const IncompleteRun*>(&e)) {
    out = error_json("incomplete_run", e.what());
    return kExitIncomplete;
  }
  out = error_json("runtime", e.what());
  return kExitRuntime;
}

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ctrlab: online CTR training experiments on synthetic streams"};
  app.require_subcommand(1);

  std::string config_path;
  RunOptions opt;
  int parallelism = 0;
  std::uint64_t seed = 0;
  std::string report_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment document (JSON)")
        ->required();
    sub->add_option("--out", opt.out, "output path (overrides output_dir)");
    sub->add_flag("--force", opt.force, "overwrite existing outputs");
    sub->add_option("--parallelism", parallelism, "concurrent trials")
        ->check(CLI::Range(1, 4096));
    sub->add_option("--seed-override", seed, "replace the master seed");
  };
  CLI::App* gen = app.add_subcommand("gen", "export the synthetic stream");
  add_common(gen);
  CLI::App* run = app.add_subcommand("run", "run the declared experiment");
  add_common(run);
  CLI::App* report = app.add_subcommand("report", "write plot-ready files for a run");
  report->add_option("dir", report_dir, "run output directory");
  report->add_option("--out", opt.out, "run output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << error_json("usage", e.what()).dump() << '\n';
    return kExitUsage;
  }

  try {
    if (report->parsed()) {
      const std::string dir = !report_dir.empty() ? report_dir : opt.out;
      if (dir.empty()) {
        err << error_json("usage", "report needs a run directory").dump() << '\n';
        return kExitUsage;
      }
      cmd_report(dir, out);
      return kExitOk;
    }
    if (parallelism > 0) opt.parallelism = parallelism;
    CLI::App* sub = gen->parsed() ? gen : run;
    if (sub->count("--seed-override") > 0) opt.seed_override = seed;
    const ExperimentFile cfg = load_experiment(config_path);
    if (gen->parsed())
      cmd_gen(cfg, opt, out);
    else
      cmd_run(cfg, opt, out);
    return kExitOk;
  } catch (const std::exception& e) {
    json j;
    const int code = classify_error(e, j);
    err << j.dump() << '\n';
    return code;
  }
}

}  // namespace ctrlab
