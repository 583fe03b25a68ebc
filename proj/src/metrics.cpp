#include "ctrlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ctrlab/model.hpp"

namespace ctrlab {

double clamp_probability(double p) noexcept {
  return std::clamp(p, kPredictionClamp, 1.0 - kPredictionClamp);
}

double logloss(double p, int y, double w) {
  return w * (y ? -std::log(p) : -std::log1p(-p));
}

double ranking_loss(std::span<const double> p,
                    std::span<const std::uint8_t> y) {
  if (p.size() != y.size())
    throw Error("ranking_loss: prediction/label length mismatch");
  std::uint64_t pos = 0;
  for (auto v : y) pos += v ? 1 : 0;
  const std::uint64_t neg = y.size() - pos;
  if (pos == 0 || neg == 0)
    throw UndefinedWindow("ranking_loss: window needs both classes");

  std::vector<std::uint32_t> order(p.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return p[a] < p[b]; });

  // correct2 counts correctly ordered pairs twice and tied pairs once
  std::uint64_t correct2 = 0;
  std::uint64_t neg_below = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::uint64_t gpos = 0, gneg = 0;
    while (j < order.size() && p[order[j]] == p[order[i]]) {
      if (y[order[j]])
        ++gpos;
      else
        ++gneg;
      ++j;
    }
    correct2 += 2 * gpos * neg_below + gpos * gneg;
    neg_below += gneg;
    i = j;
  }
  const std::uint64_t pairs2 = 2 * pos * neg;
  return static_cast<double>(pairs2 - correct2) / static_cast<double>(pairs2);
}

double prediction_bias(std::span<const double> p,
                       std::span<const std::uint8_t> y,
                       std::span<const double> w) {
  if (p.size() != y.size() || p.size() != w.size())
    throw Error("prediction_bias: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    num += w[i] * p[i];
    den += w[i] * y[i];
  }
  if (!(den > 0.0))
    throw UndefinedWindow("prediction_bias: no positives in window");
  return num / den;
}

double relative_metric(double run_value, double baseline_value) {
  if (!(baseline_value > 0.0))
    throw Error("relative_metric: baseline must be > 0");
  return (run_value - baseline_value) / baseline_value;
}

void MetricWindow::add(double p, std::uint8_t y, double w) {
  p_.push_back(p);
  y_.push_back(y);
  loss_sum_ += ctrlab::logloss(clamp_probability(p), y, w);
  weight_sum_ += w;
  predicted_weight_ += w * p;
  if (y) {
    positive_weight_ += w;
    ++positives_;
  }
}

void MetricWindow::clear() {
  p_.clear();
  y_.clear();
  loss_sum_ = weight_sum_ = positive_weight_ = predicted_weight_ = 0.0;
  positives_ = 0;
}

double MetricWindow::logloss() const {
  if (weight_sum_ <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return loss_sum_ / weight_sum_;
}

double MetricWindow::ranking_loss() const {
  if (positives_ == 0 || positives_ == p_.size())
    return std::numeric_limits<double>::quiet_NaN();
  return ctrlab::ranking_loss(p_, y_);
}

double MetricWindow::bias() const {
  if (!(positive_weight_ > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return predicted_weight_ / positive_weight_;
}

}  // namespace ctrlab
