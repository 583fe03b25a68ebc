#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ctrlab/core.hpp"

namespace ctrlab {

/// A metric was requested over a window that cannot define it (no positives,
/// or a class missing for ranking loss).
class UndefinedWindow : public Error {
 public:
  using Error::Error;
};

double clamp_probability(double p) noexcept;

/// w * (-y ln p - (1-y) ln(1-p)); p must lie in (0,1).
double logloss(double p, int y, double w = 1.0);

/// Pairwise misranking rate (1 - AUC): the fraction of (positive, negative)
/// pairs with p_pos < p_neg, ties counting one half. O(n log n).
double ranking_loss(std::span<const double> p, std::span<const std::uint8_t> y);

/// (sum w*p) / (sum w*y). 1.0 means calibrated.
double prediction_bias(std::span<const double> p,
                       std::span<const std::uint8_t> y,
                       std::span<const double> w);

/// (run - baseline) / baseline; baseline must be > 0.
double relative_metric(double run_value, double baseline_value);

/// Accumulates progressive-validation statistics over a run of examples.
class MetricWindow {
 public:
  void add(double p, std::uint8_t y, double w = 1.0);
  void clear();

  std::size_t count() const noexcept { return p_.size(); }
  double weight_sum() const noexcept { return weight_sum_; }
  double positive_weight() const noexcept { return positive_weight_; }

  /// Weighted mean logloss; NaN when empty.
  double logloss() const;
  /// NaN when a class is absent.
  double ranking_loss() const;
  /// NaN when no positives.
  double bias() const;

  std::span<const double> predictions() const noexcept { return p_; }
  std::span<const std::uint8_t> labels() const noexcept { return y_; }

 private:
  std::vector<double> p_;
  std::vector<std::uint8_t> y_;
  double loss_sum_ = 0.0;
  double weight_sum_ = 0.0;
  double positive_weight_ = 0.0;
  double predicted_weight_ = 0.0;
  std::size_t positives_ = 0;
};

}  // namespace ctrlab
