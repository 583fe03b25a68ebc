#include "ctrlab/io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "ctrlab/numeric.hpp"

namespace ctrlab {

namespace fs = std::filesystem;

namespace {

std::string opt_int(const std::optional<std::int64_t>& v) {
  return v ? std::to_string(*v) : "";
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_real(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw IncompleteRun(where + ": bad number \"" + s + "\"");
  return v;
}

std::int64_t parse_int(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size())
    throw IncompleteRun(where + ": bad integer \"" + s + "\"");
  return v;
}

}  // namespace

void write_metrics_csv(std::ostream& os, const RunRecord& run) {
  os << kMetricsHeader << '\n';
  for (const WindowRow& r : run.rows)
    os << r.window << ',' << r.t_end << ',' << r.examples_seen << ','
       << r.examples_kept << ',' << format_real(r.logloss) << ','
       << format_real(r.ranking_loss) << ',' << format_real(r.bias) << ','
       << format_real(r.rel_logloss) << ',' << format_real(r.cum_cost) << '\n';
}

std::vector<WindowRow> read_metrics_csv(std::istream& is,
                                        const std::string& origin) {
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader)
    throw IncompleteRun(origin + ": missing or unexpected header");
  std::vector<WindowRow> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    const auto f = split(line);
    if (f.size() != 9) throw IncompleteRun(where + ": expected 9 columns");
    WindowRow r;
    r.window = parse_int(f[0], where);
    r.t_end = parse_int(f[1], where);
    r.examples_seen = parse_int(f[2], where);
    r.examples_kept = parse_int(f[3], where);
    r.logloss = parse_real(f[4], where);
    r.ranking_loss = parse_real(f[5], where);
    r.bias = parse_real(f[6], where);
    r.rel_logloss = parse_real(f[7], where);
    r.cum_cost = parse_real(f[8], where);
    rows.push_back(r);
  }
  return rows;
}

void write_decisions_csv(std::ostream& os, const RunRecord& run) {
  os << "t,label,keep_prob,kept\n";
  for (const DecisionRecord& d : run.decisions)
    os << d.t << ',' << int(d.label) << ',' << format_real(d.keep_prob) << ','
       << (d.kept ? 1 : 0) << '\n';
}

void write_downsampling_csv(std::ostream& os, const DownsamplingResult& r) {
  os << "run,rate,schedule,convergence_window,convergence_examples_seen,"
        "convergence_examples_kept,final_rel_logloss_vs_baseline,"
        "final_rel_logloss_vs_full_rate,final_logloss,final_ranking_loss,"
        "final_bias,examples_kept,total_cost\n";
  for (const DownsamplingRow& d : r.rows) {
    os << d.name << ',' << format_real(d.rate) << ',' << to_string(d.schedule)
       << ',' << opt_int(d.convergence_window) << ',';
    if (d.convergence_window)
      os << d.convergence_seen << ',' << d.convergence_kept << ',';
    else
      os << ",,";
    os << format_real(d.final_rel_logloss) << ','
       << format_real(d.final_rel_vs_full) << ',' << format_real(d.final_logloss)
       << ',' << format_real(d.final_ranking_loss) << ','
       << format_real(d.final_bias) << ',' << d.examples_kept << ','
       << format_real(d.total_cost) << '\n';
  }
}

void write_distill_csv(std::ostream& os, const DistillResult& r) {
  os << "policy,start,volume,final_ranking_loss,rel_ranking_loss,"
        "final_logloss,examples_distilled\n";
  for (const DistillRow& d : r.rows)
    os << d.policy << ',' << d.start << ',' << d.volume << ','
       << format_real(d.final_ranking_loss) << ','
       << format_real(d.rel_ranking_loss) << ',' << format_real(d.final_logloss)
       << ',' << d.examples_distilled << '\n';
}

void write_isocompute_csv(std::ostream& os,
                          const std::vector<SweepResult>& sweeps) {
  os << "budget,model,params,planned_examples,planned_cost,rate,hist_start,"
        "examples_kept,realized_cost,final_logloss,final_ranking_loss,"
        "final_bias,is_argmin\n";
  for (const SweepResult& s : sweeps)
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
      const SweepRow& r = s.rows[i];
      os << format_real(r.budget) << ',' << r.model << ',' << r.params << ','
         << r.planned_examples << ',' << format_real(r.planned_cost) << ','
         << format_real(r.rate) << ',' << r.hist_start << ','
         << r.examples_kept << ',' << format_real(r.realized_cost) << ','
         << format_real(r.final_logloss) << ','
         << format_real(r.final_ranking_loss) << ','
         << format_real(r.final_bias) << ',' << (i == s.argmin ? 1 : 0)
         << '\n';
    }
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << content;
  os.close();
  if (!os) throw Error("write failed: " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IncompleteRun("missing file: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

StagingDir::StagingDir(fs::path target, bool force)
    : target_(std::move(target)), force_(force) {
  if (target_.empty()) throw Error("output directory not set");
  if (fs::exists(target_) && !force_)
    throw OutputExists("output exists: " + target_.string() +
                       " (pass --force to overwrite)");
  staging_ = target_;
  staging_ += ".partial";
  std::error_code ec;
  fs::remove_all(staging_, ec);
  if (target_.has_parent_path()) fs::create_directories(target_.parent_path());
  fs::create_directories(staging_);
}

StagingDir::~StagingDir() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

void StagingDir::commit() {
  if (fs::exists(target_)) {
    if (!force_)
      throw OutputExists("output exists: " + target_.string() +
                         " (pass --force to overwrite)");
    fs::remove_all(target_);
  }
  fs::rename(staging_, target_);
  committed_ = true;
}

}  // namespace ctrlab
