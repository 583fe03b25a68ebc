#include <vector>

#include <omp.h>

#include "doctest.h"
#include "fixtures.hpp"

#include "ctrlab/datagen.hpp"

using namespace ctrlab;

namespace {

// Forces several threads even on a single-core machine.
struct Threads {
  int saved;
  explicit Threads(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~Threads() { omp_set_num_threads(saved); }
};

}  // namespace

TEST_SUITE("parallel") {

TEST_CASE("parallel kernels equal their serial references bit for bit") {
  for (int threads : {1, 2, 4, 7}) {
    CAPTURE(threads);
    const Threads guard(threads);
    StreamSpec spec = fixture::small_spec(21);
    spec.drift_magnitude = 0.2;
    spec.drift_period = 7'000;
    const ClickStream stream(spec);
    const HashConfig hash{4096, 5};

    CHECK(stream.generate(hash, 3'000, 40'000) ==
          stream.generate_serial(hash, 3'000, 40'000));
    const LabelCounts a = stream.count_labels(0, 123'457);
    const LabelCounts b = stream.count_labels_serial(0, 123'457);
    CHECK(a.positives == b.positives);
    CHECK(a.negatives == b.negatives);

    const auto scores = calibration_scores(stream, 50'001);
    CHECK(scores == calibration_scores_serial(stream, 50'001));
    for (double c : {-6.0, -2.5, 0.0})
      CHECK(marginal_ctr(scores, c) == marginal_ctr_serial(scores, c));

    std::vector<Example> reuse(5);
    stream.generate_into(hash, 100, 9'100, reuse);
    CHECK(reuse == stream.generate_serial(hash, 100, 9'100));
  }
}

TEST_CASE("calibrated intercept does not depend on the thread count") {
  double first = 0.0;
  for (int threads : {1, 3, 8}) {
    const Threads guard(threads);
    const double c = calibrate_intercept(fixture::small_spec(4));
    if (threads == 1) first = c;
    CHECK(c == first);
  }
}

TEST_CASE("concurrent trials equal sequential ones") {
  const auto& stream = fixture::small_stream();
  std::vector<TrialConfig> cfgs;
  for (double r : {1.0, 0.5, 0.2, 0.1}) {
    TrialConfig c = fixture::small_trial();
    c.sampler = {UniformNegative{r}, Continuous{}};
    cfgs.push_back(c);
  }
  const auto one = run_trials(cfgs, stream, nullptr, 1);
  const auto four = run_trials(cfgs, stream, nullptr, 4);
  REQUIRE(one.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(fixture::metrics_csv(one[i]) == fixture::metrics_csv(four[i]));
    CHECK(fixture::metrics_csv(one[i]) ==
          fixture::metrics_csv(run_trial(cfgs[i], stream)));
  }
  std::vector<TrialConfig> bad = cfgs;
  bad[2].window = 0;
  CHECK_THROWS_AS(run_trials(bad, stream, nullptr, 2), Error);
}

}  // TEST_SUITE
