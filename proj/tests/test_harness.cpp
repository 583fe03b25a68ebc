#include <cmath>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

#include "ctrlab/harness.hpp"

using namespace ctrlab;

TEST_SUITE("harness") {

TEST_CASE("trial validation") {
  TrialConfig c = fixture::small_trial();
  CHECK_NOTHROW(c.validate());
  c.hist_end = c.hist_start;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = fixture::small_trial();
  c.online_end = c.hist_end - 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = fixture::small_trial();
  c.window = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("windows and tail") {
  TrialConfig c = fixture::small_trial(2'500, 40'000, 50'000);
  CHECK(c.first_window() == 0);
  CHECK(c.last_window() == 9);
  CHECK(c.window_count() == 10);
  CHECK(c.resolved_final_windows() == 1);
  CHECK(c.tail_start() == 45'000);
  c.final_windows = 3;
  CHECK(c.tail_start() == 35'000);
  c.final_windows = 50;
  CHECK(c.tail_start() == 2'500);
}

TEST_CASE("runs are deterministic") {
  TrialConfig c = fixture::small_trial();
  c.sampler = {UniformNegative{0.3}, Continuous{}};
  const auto& s = fixture::small_stream();
  CHECK(fixture::metrics_csv(run_trial(c, s)) ==
        fixture::metrics_csv(run_trial(c, s)));
}

TEST_CASE("progressive validation matches a hand-written loop") {
  const auto& stream = fixture::small_stream();
  TrialConfig c = fixture::small_trial(0, 20'000, 25'000);
  c.final_windows = 2;
  const RunRecord r = run_trial(c, stream);

  CtrModel m(c.model, c.seed);
  std::vector<double> win_loss(5, 0.0);
  std::vector<double> tail_p;
  std::vector<std::uint8_t> tail_y;
  double tail_loss = 0.0;
  for (std::int64_t t = 0; t < 25'000; ++t) {
    const Example x = stream.example_at(t, c.model.hash);
    const double p = m.predict(x);
    const double l = oracle::logloss(p, x.label, 1.0);
    win_loss[static_cast<std::size_t>(t / 5'000)] += l;
    if (t >= 15'000) {
      tail_loss += l;
      tail_p.push_back(p);
      tail_y.push_back(x.label);
    }
    m.grad_step(x, x.label, c.learning_rate);
  }
  REQUIRE(r.rows.size() == 5);
  for (std::size_t w = 0; w < 5; ++w) {
    CHECK(r.rows[w].logloss == doctest::Approx(win_loss[w] / 5'000).epsilon(1e-12));
    CHECK(r.rows[w].examples_seen == static_cast<std::int64_t>(5'000 * (w + 1)));
  }
  CHECK(r.summary.final_logloss == doctest::Approx(tail_loss / 10'000).epsilon(1e-12));
  CHECK(r.summary.final_ranking_loss == oracle::ranking_loss(tail_p, tail_y));
}

TEST_CASE("metrics are taken on the raw stream under downsampling") {
  TrialConfig c = fixture::small_trial();
  c.sampler = {UniformNegative{0.1}, Continuous{}};
  const RunRecord r = run_trial(c, fixture::small_stream());
  CHECK(r.summary.examples_seen == 50'000);
  CHECK(r.summary.examples_kept < 10'000);
  const LabelCounts lc = fixture::small_stream().count_labels(0, 50'000);
  CHECK(r.summary.examples_kept > lc.positives);
  for (std::size_t i = 0; i < r.rows.size(); ++i)
    CHECK(r.rows[i].examples_seen == static_cast<std::int64_t>(5'000 * (i + 1)));
}

TEST_CASE("empty online range") {
  const RunRecord r =
      run_trial(fixture::small_trial(0, 20'000, 20'000), fixture::small_stream());
  CHECK(r.online.examples == 0);
  CHECK(r.historical.examples == 20'000);
  CHECK(r.rows.size() == 4);
}

TEST_CASE("sampler applies in both phases unless cut off") {
  const auto& s = fixture::small_stream();
  TrialConfig c = fixture::small_trial();
  c.sampler = {UniformNegative{0.5}, Continuous{}};
  const RunRecord cont = run_trial(c, s);
  CHECK(cont.historical.downsampling_decisions > 0);
  CHECK(cont.online.downsampling_decisions > 0);
  CHECK(cont.online.kept < cont.online.examples);

  c.sampler.schedule = Cutoff{c.hist_end};
  const RunRecord cut = run_trial(c, s);
  CHECK(cut.historical.downsampling_decisions > 0);
  CHECK(cut.online.downsampling_decisions == 0);
  CHECK(cut.online.kept == cut.online.examples);
}

TEST_CASE("cost accounting") {
  CHECK(accumulate_cost({1.0}, 1025, 1'000'000) == 1.025e9);
  CHECK(accumulate_cost({3.0}, 10, 0) == 0.0);
  TrialConfig c = fixture::small_trial();
  c.sampler = {UniformNegative{0.4}, Continuous{}};
  c.cost.kappa = 2.0;
  const RunRecord r = run_trial(c, fixture::small_stream());
  CHECK(r.param_count == 2049);
  for (const WindowRow& row : r.rows)
    CHECK(row.cum_cost == 2.0 * 2049.0 * static_cast<double>(row.examples_kept));
  CHECK(r.summary.total_cost == 2.0 * 2049.0 * r.summary.examples_kept);
}

TEST_CASE("convergence detection") {
  const int k = 5;
  SUBCASE("constant series converges at once") {
    std::vector<double> s(30, 0.02);
    CHECK(detect_convergence(s, 0.002, k) == std::optional<std::size_t>(0));
  }
  SUBCASE("steadily improving series never converges") {
    std::vector<double> s;
    for (int i = 0; i < 100; ++i) s.push_back(1.0 - 0.01 * i);
    CHECK_FALSE(detect_convergence(s, 0.002, k).has_value());
  }
  SUBCASE("plateau is found where it starts") {
    std::vector<double> s;
    for (int i = 0; i < 50; ++i) s.push_back(1.0 - 0.01 * i);
    oracle::TestGen gen(3);
    for (int i = 0; i < 40; ++i) s.push_back(0.5 + 0.0005 * gen.uniform());
    const auto w = detect_convergence(s, 0.002, k);
    REQUIRE(w.has_value());
    CHECK(*w >= 50);
    CHECK(*w <= 50 + k);
  }
  SUBCASE("too short for the patience") {
    std::vector<double> s(5, 0.1);
    CHECK_FALSE(detect_convergence(s, 0.002, k).has_value());
  }
  SUBCASE("relative variant") {
    std::vector<double> base(20, 0.5), run(20, 0.51);
    CHECK(detect_convergence(run, base, 0.002, k) ==
          std::optional<std::size_t>(0));
    CHECK_THROWS_AS(detect_convergence(run, std::vector<double>(19, 0.5), 0.002, k),
                    Error);
  }
  CHECK_THROWS_AS(detect_convergence(std::vector<double>(3, 0.1), 0.0, k), Error);
}

TEST_CASE("baseline attachment") {
  const auto& s = fixture::small_stream();
  const TrialConfig ref = fixture::small_trial(0, 40'000, 50'000);
  const RunRecord base = run_trial(ref, s);
  RunRecord self = base;
  attach_baseline(self, base, 0.002, 3);
  for (const WindowRow& row : self.rows) CHECK(row.rel_logloss == 0.0);
  CHECK(self.summary.convergence_row == std::optional<std::size_t>(0));
  CHECK(self.summary.final_rel_logloss == 0.0);

  TrialConfig later = ref;
  later.hist_start = 20'000;
  RunRecord r = run_trial(later, s);
  attach_baseline(r, base, 0.002, 3);
  CHECK(r.rows.front().window == 4);
  CHECK(r.rows.front().rel_logloss ==
        doctest::Approx(r.rows.front().logloss / base.rows[4].logloss - 1.0));

  TrialConfig wider = ref;
  wider.online_end = 60'000;
  RunRecord w = run_trial(wider, s);
  CHECK_THROWS_AS(attach_baseline(w, base, 0.002, 3), Error);
}

TEST_CASE("start date pruning") {
  TrialConfig c = fixture::small_trial(0, 40'000, 50'000);
  c.sampler = {UniformNegative{0.5}, Cutoff{3'000}};
  const TrialConfig p = prune_start_date(c, 2);
  CHECK(p.hist_start == 10'000);
  CHECK(p.hist_end == 40'000);
  CHECK(std::get<Cutoff>(p.sampler.schedule).t_cut == 10'000);
  CHECK(prune_start_date(c, 0).hist_start == 0);
  CHECK_THROWS_AS(prune_start_date(c, 8), ConfigError);
  CHECK_THROWS_AS(prune_start_date(c, -1), ConfigError);
}

}  // TEST_SUITE
