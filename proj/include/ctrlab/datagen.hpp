#pragma once

// Synthetic non-stationary click stream with known click probabilities.
//
// Each timestamp t carries exactly one impression. Tokens per field follow a
// Zipf law over the field vocabulary; the click probability is a logistic
// function of per-token latent weights plus a calibrated intercept. Drift is
// piecewise constant: every `drift_period` timestamps a fresh perturbation of
// norm proportional to `drift_magnitude` replaces the previous one.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "ctrlab/core.hpp"

namespace ctrlab {

struct StreamSpec {
  std::uint32_t n_fields = 8;
  std::uint32_t vocab_per_field = 1000;
  double zipf_exponent = 1.1;
  double base_ctr = 1.0 / 251.0;
  std::int64_t drift_period = 1'000'000;
  double drift_magnitude = 0.0;
  std::uint64_t ground_truth_dim = 1u << 16;
  /// Standard deviation of each latent token weight.
  double weight_scale = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

struct LabelCounts {
  std::int64_t positives = 0;
  std::int64_t negatives = 0;
  std::int64_t total() const noexcept { return positives + negatives; }
};

/// Number of Monte-Carlo token draws used for intercept calibration.
inline constexpr std::size_t kCalibrationSamples = 100'000;

/// Immutable, thread-safe view of one stream description. Construction
/// calibrates the intercept; every query afterwards is a pure function.
class ClickStream {
 public:
  explicit ClickStream(const StreamSpec& spec);
  ClickStream(const StreamSpec& spec, double intercept);

  const StreamSpec& spec() const noexcept { return spec_; }
  double intercept() const noexcept { return intercept_; }

  std::int64_t epoch_of(std::int64_t t) const noexcept {
    return t / spec_.drift_period;
  }

  /// Token id per field at timestamp t.
  std::vector<std::uint32_t> tokens_at(std::int64_t t) const;
  void tokens_at(std::int64_t t, std::span<std::uint32_t> out) const;

  /// Latent logit without the intercept.
  double latent_score(std::span<const std::uint32_t> tokens,
                      std::int64_t t) const;
  double true_ctr(std::span<const std::uint32_t> tokens, std::int64_t t) const;

  std::uint8_t label_at(std::int64_t t, double ctr) const noexcept;

  /// Builds the impression at t with features hashed under `hash`.
  Example example_at(std::int64_t t, const HashConfig& hash) const;
  void example_at(std::int64_t t, const HashConfig& hash, Example& out) const;
  /// Hashed index of every (field, token), row-major by field.
  std::vector<std::uint64_t> feature_table(const HashConfig& hash) const;

  /// Examples for [t_start, t_end), parallel over timestamps.
  std::vector<Example> generate(const HashConfig& hash, std::int64_t t_start,
                                std::int64_t t_end) const;
  /// Serial reference for `generate`.
  std::vector<Example> generate_serial(const HashConfig& hash,
                                       std::int64_t t_start,
                                       std::int64_t t_end) const;
  /// Fills `out` (resized) with examples for [t_start, t_end) in parallel,
  /// reusing its storage.
  void generate_into(const HashConfig& hash, std::int64_t t_start,
                     std::int64_t t_end, std::vector<Example>& out) const;

  LabelCounts count_labels(std::int64_t t_start, std::int64_t t_end) const;
  LabelCounts count_labels_serial(std::int64_t t_start,
                                  std::int64_t t_end) const;

  /// Writes one record per line: `t,label,weight,field:index,...`.
  void export_records(std::ostream& os, const HashConfig& hash,
                      std::int64_t t_start, std::int64_t t_end) const;

 private:
  std::uint32_t zipf_token(double u) const;
  void example_at(std::int64_t t, const HashConfig& hash,
                  std::span<const std::uint64_t> table, Example& out) const;
  double drift_weight(std::uint64_t bucket, std::int64_t epoch) const;

  StreamSpec spec_;
  double intercept_ = 0.0;
  std::vector<double> zipf_cdf_;
  std::vector<std::size_t> zipf_guide_;
  // latent bucket per (field, token), row-major by field
  std::vector<std::uint64_t> gt_bucket_;
  std::vector<double> gt_weight_;
  Rng token_rng_;
  Rng label_rng_;
  Rng drift_rng_;
};

/// Latent scores (without intercept) of the calibration sample, drawn at
/// epoch 0. Parallel over draws.
std::vector<double> calibration_scores(const ClickStream& stream,
                                       std::size_t n = kCalibrationSamples);
std::vector<double> calibration_scores_serial(
    const ClickStream& stream, std::size_t n = kCalibrationSamples);

/// Mean of sigmoid(intercept + s) over `scores`, summed in fixed-size chunks
/// so the result does not depend on the thread count.
double marginal_ctr(std::span<const double> scores, double intercept);
double marginal_ctr_serial(std::span<const double> scores, double intercept);

/// Bisection on [-30, 30] for the intercept whose Monte-Carlo marginal click
/// rate equals spec.base_ctr. Throws Error when the root is not bracketed.
double calibrate_intercept(const StreamSpec& spec);

void validate_range(std::int64_t t_start, std::int64_t t_end);

}  // namespace ctrlab
