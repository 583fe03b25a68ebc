#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "doctest.h"
#include "json.hpp"

#include "ctrlab/app.hpp"
#include "ctrlab/config.hpp"
#include "ctrlab/io.hpp"

using namespace ctrlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int code = 0;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ctrlab");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("ctrlab_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name, const std::string& content) const {
    const fs::path p = path / name;
    std::ofstream(p) << content;
    return p.string();
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

json small_doc() {
  return json::parse(R"({
    "kind": "single",
    "seed": 5,
    "stream": {"vocab_per_field": 100, "base_ctr": 0.05},
    "trial": {
      "hist_start": 0, "hist_end": 16000, "online_end": 20000,
      "model": {"kind": "linear", "dimension": 2048},
      "sampler": {"signal": "uniform_negative", "rate": 0.5},
      "window": 4000
    }
  })");
}

std::string config_error_key(const std::string& text) {
  try {
    parse_experiment(text);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<no error>";
}

std::string slurp(const fs::path& p) { return read_text_file(p); }

}  // namespace

TEST_SUITE("config_cli") {

TEST_CASE("document parsing") {
  const ExperimentFile f = parse_experiment(small_doc().dump());
  CHECK(f.kind == ExperimentKind::single);
  CHECK(f.seed == 5);
  CHECK(f.stream.seed == 5);
  CHECK(f.trial.seed == 5);
  CHECK(f.trial.timestamps_per_day == 4000);
  CHECK(std::get<UniformNegative>(f.trial.sampler.signal).rate == 0.5);

  json d = small_doc();
  d["trial"]["hist_end"] = 1.6e4;
  CHECK(parse_experiment(d.dump()).trial.hist_end == 16000);
}

TEST_CASE("schema errors name the key") {
  json d = small_doc();
  d["stream"]["bogus"] = 1;
  CHECK(config_error_key(d.dump()) == "stream.bogus");

  d = small_doc();
  d["stream"]["base_ctr"] = 1.5;
  CHECK(config_error_key(d.dump()) == "stream.base_ctr");

  d = small_doc();
  d["trial"]["model"]["dimension"] = 1000;
  CHECK(config_error_key(d.dump()) == "trial.model.dimension");

  d = small_doc();
  d["trial"]["window"] = "big";
  CHECK(config_error_key(d.dump()) == "trial.window");

  d = small_doc();
  d["trial"].erase("hist_end");
  CHECK(config_error_key(d.dump()) == "trial.hist_end");

  d = small_doc();
  d["isocompute"] = json::object();
  CHECK(config_error_key(d.dump()) == "isocompute");

  d = small_doc();
  d["kind"] = "distill";
  CHECK(config_error_key(d.dump()) == "distill");
}

TEST_CASE("syntax errors carry line and column") {
  try {
    parse_experiment("{\n  \"kind\": \"single\",\n  \"seed\": ,\n}", "doc.json");
    FAIL("expected error");
  } catch (const ConfigError& e) {
    const std::string m = e.what();
    CHECK(m.find("doc.json") != std::string::npos);
    CHECK(m.find("line 3") != std::string::npos);
    CHECK(m.find("column") != std::string::npos);
  }
}

TEST_CASE("shipped documents parse") {
  for (const char* name : {"single", "calibration", "downsampling", "distill",
                           "isocompute"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_experiment(std::string(CTRLAB_SOURCE_DIR) + "/configs/" +
                                  name + ".json"));
  }
}

TEST_CASE("config echo is stable and omits run-only settings") {
  json d = small_doc();
  d["parallelism"] = 3;
  d["output_dir"] = "somewhere";
  const json a = config_echo(parse_experiment(d.dump()));
  d["parallelism"] = 1;
  d.erase("output_dir");
  const json b = config_echo(parse_experiment(d.dump()));
  CHECK(a == b);
  CHECK_FALSE(a.contains("parallelism"));
  CHECK_FALSE(a.contains("output_dir"));
}

TEST_CASE("gen writes the stream deterministically") {
  TempDir tmp;
  const std::string cfg = tmp.file("c.json", small_doc().dump());
  const CliResult r = cli({"gen", "--config", cfg, "--out", tmp / "a.csv"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("examples 20000") != std::string::npos);
  REQUIRE(cli({"gen", "--config", cfg, "--out", tmp / "b.csv"}).code == 0);
  CHECK(slurp(tmp / "a.csv") == slurp(tmp / "b.csv"));

  std::istringstream lines(slurp(tmp / "a.csv"));
  std::string line;
  int n = 0, pos = 0;
  while (std::getline(lines, line)) {
    ++n;
    pos += line.rfind(std::to_string(n - 1) + ",1,", 0) == 0;
  }
  CHECK(n == 20000);
  const double rate = pos / 20000.0;
  CHECK(rate > 0.035);
  CHECK(rate < 0.065);

  const CliResult again = cli({"gen", "--config", cfg, "--out", tmp / "a.csv"});
  CHECK(again.code == kExitOutputExists);
  CHECK(cli({"gen", "--config", cfg, "--out", tmp / "a.csv", "--force"}).code == 0);
  CHECK(cli({"gen", "--config", cfg}).code == kExitConfig);
}

TEST_CASE("run and report a single trial") {
  TempDir tmp;
  const std::string cfg = tmp.file("c.json", small_doc().dump());
  const std::string out = tmp / "run";
  REQUIRE(cli({"run", "--config", cfg, "--out", out}).code == 0);
  const std::string csv = slurp(fs::path(out) / "metrics.csv");
  CHECK(csv.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
  const json summary = json::parse(slurp(fs::path(out) / "summary.json"));
  CHECK(summary["schema_version"] == kSchemaVersion);
  CHECK(summary["kind"] == "single");
  CHECK_FALSE(fs::exists(out + ".partial"));

  const CliResult again = cli({"run", "--config", cfg, "--out", out});
  CHECK(again.code == kExitOutputExists);
  CHECK(json::parse(again.err)["error"]["type"] == "output_exists");

  REQUIRE(cli({"report", out}).code == 0);
  CHECK(fs::exists(fs::path(out) / "report" / "fig1_accuracy_vs_data.csv"));
  CHECK(fs::exists(fs::path(out) / "report" / "report.txt"));
  CHECK(json::parse(slurp(fs::path(out) / "report" / "report.json"))["kind"] ==
        "single");

  // a different seed changes the result, the same seed does not
  REQUIRE(cli({"run", "--config", cfg, "--out", tmp / "same"}).code == 0);
  REQUIRE(cli({"run", "--config", cfg, "--out", tmp / "other",
               "--seed-override", "99"}).code == 0);
  CHECK(slurp(fs::path(tmp / "same") / "metrics.csv") == csv);
  CHECK(slurp(fs::path(tmp / "other") / "metrics.csv") != csv);
}

TEST_CASE("report of a missing or incomplete run") {
  TempDir tmp;
  CHECK(cli({"report", tmp / "nothing"}).code == kExitIncomplete);
  fs::create_directories(tmp.path / "half.partial");
  fs::create_directories(tmp.path / "half");
  CHECK(cli({"report", tmp / "half"}).code == kExitIncomplete);
  fs::create_directories(tmp.path / "bad");
  tmp.file("bad/summary.json", "{\"schema_version\": 99}");
  CHECK(cli({"report", tmp / "bad"}).code == kExitIncomplete);
}

TEST_CASE("usage and config errors are JSON on stderr") {
  TempDir tmp;
  const CliResult none = cli({});
  CHECK(none.code == kExitUsage);
  CHECK(json::parse(none.err)["schema_version"] == kSchemaVersion);
  CHECK(cli({"run", "--config", tmp / "c.json", "--parallelism", "0"}).code ==
        kExitUsage);

  json d = small_doc();
  d["trial"]["model"]["dimension"] = 1000;
  const std::string cfg = tmp.file("bad.json", d.dump());
  const CliResult r = cli({"run", "--config", cfg, "--out", tmp / "x"});
  CHECK(r.code == kExitConfig);
  const json e = json::parse(r.err);
  CHECK(e["error"]["type"] == "config");
  CHECK(e["error"]["key"] == "trial.model.dimension");
  CHECK_FALSE(fs::exists(tmp.path / "x"));

  CHECK(cli({"run", "--config", tmp / "missing.json", "--out", tmp / "y"}).code ==
        kExitConfig);
}

TEST_CASE("iso-compute budget too small is a config error") {
  TempDir tmp;
  json d = small_doc();
  d["kind"] = "isocompute";
  d["trial"].erase("sampler");
  d["isocompute"] = json::parse(R"({
    "budgets": [1000],
    "models": [{"dimension": 512}, {"dimension": 1024}, {"dimension": 2048}],
    "min_examples": 1000
  })");
  const std::string cfg = tmp.file("iso.json", d.dump());
  const CliResult r = cli({"run", "--config", cfg, "--out", tmp / "iso"});
  CHECK(r.code == kExitConfig);
  CHECK(json::parse(r.err)["error"]["message"].get<std::string>().find(
            "budget too small") != std::string::npos);
  CHECK_FALSE(fs::exists(tmp.path / "iso"));
}

TEST_CASE("experiment reports") {
  TempDir tmp;
  SUBCASE("downsampling") {
    json d = small_doc();
    d["kind"] = "downsampling";
    d["trial"]["hist_start"] = 4000;
    d["downsampling"] = json::parse(R"({"rates": [1, 0.3], "baseline_start": 0})");
    const std::string cfg = tmp.file("ds.json", d.dump());
    REQUIRE(cli({"run", "--config", cfg, "--out", tmp / "ds"}).code == 0);
    REQUIRE(cli({"report", tmp / "ds"}).code == 0);
    const std::string fig2 = slurp(fs::path(tmp / "ds") / "report/fig2_convergence.csv");
    CHECK(fig2.rfind("series,x,y\n", 0) == 0);
    CHECK(fig2.find("rate-0.3-continuous,") != std::string::npos);
    CHECK(fig2.find("rate-0.3-cutoff,") != std::string::npos);
    CHECK(fig2.find("reference,") == std::string::npos);
    CHECK(fs::exists(fs::path(tmp / "ds") / "downsampling.csv"));
  }
  SUBCASE("distill") {
    json d = small_doc();
    d["kind"] = "distill";
    d["trial"]["hist_start"] = 4000;
    d["trial"].erase("sampler");
    d["distill"] = json::parse(R"({
      "teacher": {"model": {"dimension": 8192, "salt": 1}, "start": 0},
      "start_dates": [4000, 8000, 12000],
      "policies": ["continuous", "cutover-0.8"],
      "epsilon": 0.5
    })");
    const std::string cfg = tmp.file("di.json", d.dump());
    REQUIRE(cli({"run", "--config", cfg, "--out", tmp / "di"}).code == 0);
    CHECK(fs::exists(fs::path(tmp / "di") / "teacher.ckpt"));
    const CliResult r = cli({"report", tmp / "di"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("data saving, continuous vs cutover-0.8:") != std::string::npos);
    CHECK(r.out.find("production-scale reference: 35%") != std::string::npos);
    CHECK(fs::exists(fs::path(tmp / "di") / "report/fig3_distillation.csv"));
  }
  SUBCASE("isocompute") {
    json d = small_doc();
    d["kind"] = "isocompute";
    d["trial"].erase("sampler");
    d["isocompute"] = json::parse(R"({
      "budgets": [8e6],
      "models": [{"dimension": 512}, {"dimension": 1024}, {"dimension": 2048}],
      "min_examples": 1000
    })");
    const std::string cfg = tmp.file("iso.json", d.dump());
    REQUIRE(cli({"run", "--config", cfg, "--out", tmp / "iso"}).code == 0);
    REQUIRE(cli({"report", tmp / "iso"}).code == 0);
    const std::string fig4 = slurp(fs::path(tmp / "iso") / "report/fig4_isocompute.csv");
    CHECK(fig4.find("budget=8000000,513,") != std::string::npos);
    CHECK(fig4.find("budget=8000000,2049,") != std::string::npos);
  }
}

TEST_CASE("executable entry point") {
  TempDir tmp;
  const std::string cfg = tmp.file("c.json", small_doc().dump());
  const std::string cmd = std::string(CTRLAB_CLI_PATH) + " gen --config " + cfg +
                          " --out " + (tmp / "x.csv") + " > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(tmp.path / "x.csv"));
  const std::string bad = std::string(CTRLAB_CLI_PATH) + " frobnicate 2> /dev/null";
  const int status = std::system(bad.c_str());
  CHECK(WEXITSTATUS(status) == kExitUsage);
}

}  // TEST_SUITE
