#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

#include "ctrlab/metrics.hpp"

using namespace ctrlab;

TEST_SUITE("metrics") {

TEST_CASE("logloss values") {
  CHECK(logloss(0.5, 1, 1.0) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(logloss(0.9, 0, 1.0) == doctest::Approx(2.302585).epsilon(1e-6));
  for (double p : {0.01, 0.3, 0.77})
    for (int y : {0, 1}) {
      CHECK(logloss(p, y, 2.0) == 2.0 * logloss(p, y, 1.0));
      CHECK(logloss(p, y, 1.0) == doctest::Approx(oracle::logloss(p, y, 1.0)));
    }
}

TEST_CASE("ranking loss examples") {
  using V = std::vector<double>;
  using L = std::vector<std::uint8_t>;
  CHECK(ranking_loss(V{0.1, 0.2, 0.8, 0.9}, L{0, 0, 1, 1}) == 0.0);
  CHECK(ranking_loss(V{0.3, 0.3, 0.3, 0.3}, L{0, 1, 0, 1}) == 0.5);
  CHECK(ranking_loss(V{0.1, 0.4, 0.35, 0.8}, L{0, 0, 1, 1}) == 0.25);
  CHECK(ranking_loss(V{0.9, 0.1}, L{0, 1}) == 1.0);
  CHECK_THROWS_AS(ranking_loss(V{0.1, 0.2}, L{1, 1}), UndefinedWindow);
  CHECK_THROWS_AS(ranking_loss(V{0.1, 0.2}, L{0, 0}), UndefinedWindow);
}

TEST_CASE("sort-based ranking loss equals brute force on random windows with ties") {
  oracle::TestGen gen(77);
  int checked = 0;
  while (checked < 1000) {
    const std::size_t n = 2 + gen.below(199);
    // coarse quantization produces many ties
    const std::uint64_t levels = 1 + gen.below(50);
    std::vector<double> p(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<double>(gen.below(levels)) / static_cast<double>(levels);
      y[i] = gen.uniform() < 0.3 ? 1 : 0;
    }
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<long>(n)) continue;
    CHECK(ranking_loss(p, y) == oracle::ranking_loss(p, y));
    ++checked;
  }
}

TEST_CASE("prediction bias") {
  const std::vector<double> ones(4, 1.0);
  CHECK(prediction_bias(std::vector<double>{1, 0, 1, 0},
                        std::vector<std::uint8_t>{1, 0, 1, 0}, ones) == 1.0);
  const std::vector<double> p{0.2, 0.1, 0.3, 0.4};
  const std::vector<std::uint8_t> y{0, 1, 0, 0};
  const double b = prediction_bias(p, y, ones);
  CHECK(b == doctest::Approx(1.0));
  const std::vector<double> p2{0.4, 0.2, 0.6, 0.8};
  CHECK(prediction_bias(p2, y, ones) == doctest::Approx(2.0 * b));
  CHECK_THROWS_AS(prediction_bias(p, std::vector<std::uint8_t>(4, 0), ones),
                  UndefinedWindow);
}

TEST_CASE("relative metric") {
  CHECK(relative_metric(0.7, 0.7) == 0.0);
  CHECK(relative_metric(1.02, 1.0) == doctest::Approx(0.02));
  CHECK(relative_metric(1.1, 1.0) != doctest::Approx(-relative_metric(1.0, 1.1)));
  CHECK_THROWS_AS(relative_metric(1.0, 0.0), Error);
  CHECK_THROWS_AS(relative_metric(1.0, -2.0), Error);
}

TEST_CASE("metric window") {
  MetricWindow w;
  CHECK(std::isnan(w.logloss()));
  w.add(0.5, 1, 1.0);
  w.add(0.9, 0, 3.0);
  CHECK(w.count() == 2);
  CHECK(w.logloss() ==
        doctest::Approx((oracle::logloss(0.5, 1, 1) + oracle::logloss(0.9, 0, 3)) / 4.0));
  CHECK(w.ranking_loss() == 1.0);
  CHECK(w.bias() == doctest::Approx((0.5 + 2.7) / 1.0));
  w.clear();
  w.add(0.2, 0);
  CHECK(std::isnan(w.ranking_loss()));
  CHECK(std::isnan(w.bias()));
}

}  // TEST_SUITE
