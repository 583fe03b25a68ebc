#pragma once

// Negative downsampling with inverse-probability re-weighting.
//
// Every signal downsamples negatives only; positives always pass with keep
// probability 1. A schedule decides whether the signal applies at time t:
// `Continuous` applies it everywhere (historical and online phases),
// `Cutoff` stops downsampling from t_cut on.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ctrlab/core.hpp"

namespace ctrlab {

struct UniformNegative {
  double rate = 1.0;
};
/// Keep negatives with rate r only when the current model already finds
/// them easy (logloss below the threshold).
struct LowLoss {
  double rate = 1.0;
  double loss_threshold = 0.0;
};
/// Keep probability min(1, r * (1 + c / sqrt(1 + min feature count))).
struct CountUncertainty {
  double rate = 1.0;
  double count_scale = 1.0;
};
using SamplerSignal = std::variant<UniformNegative, LowLoss, CountUncertainty>;

struct Continuous {};
struct Cutoff {
  std::int64_t t_cut = 0;
};
using SamplerSchedule = std::variant<Continuous, Cutoff>;

struct SamplerPolicy {
  SamplerSignal signal = UniformNegative{1.0};
  SamplerSchedule schedule = Continuous{};

  /// hist range is used to check t_cut; pass the trial's [start, end).
  void validate(std::int64_t hist_start, std::int64_t hist_end) const;
  double base_rate() const noexcept;
  /// True when the signal keeps every example (rate 1 uniform).
  bool is_identity() const noexcept;
  bool uses_counts() const noexcept {
    return std::holds_alternative<CountUncertainty>(signal);
  }
  std::string describe() const;
};

inline constexpr double kDefaultLossDecay = 0.01;

/// Fresh statistics the signals read: per-(field, index) occurrence counts
/// and an exponential moving average of per-example logloss.
class SamplerState {
 public:
  SamplerState() = default;
  /// `track_counts` allocates an n_fields x dimension count table.
  SamplerState(std::uint32_t n_fields, std::uint64_t dimension,
               bool track_counts, double loss_decay = kDefaultLossDecay);

  /// Smallest occurrence count among x's features; 0 when untracked.
  std::uint64_t min_count(const Example& x) const;
  std::uint64_t count(std::uint32_t field, std::uint64_t index) const;

  void update(const Example& x, double loss);

  double loss_ema() const noexcept { return ema_; }
  bool has_loss() const noexcept { return seen_ > 0; }
  std::uint64_t decisions() const noexcept { return decisions_; }
  void note_decision() noexcept { ++decisions_; }
  double loss_decay() const noexcept { return decay_; }

 private:
  std::uint32_t n_fields_ = 0;
  std::uint64_t dimension_ = 0;
  std::vector<std::uint32_t> counts_;
  double decay_ = kDefaultLossDecay;
  double ema_ = 0.0;
  std::uint64_t seen_ = 0;
  std::uint64_t decisions_ = 0;
};

/// 1 / keep_prob; rejects keep_prob outside (0, 1].
double importance_weight(double keep_prob);

double keep_probability(const SamplerPolicy& policy, const SamplerState& state,
                        const Example& x, double p_current, std::int64_t t);

void update_state(SamplerState& state, const Example& x, double loss);

struct SampleDecision {
  bool kept = true;
  double keep_prob = 1.0;
};

/// Decides keep/drop for x with a uniform keyed by (t, decision counter),
/// rescales the weight of a kept example by the importance weight, and
/// updates the state for every example, kept or dropped.
SampleDecision apply(const SamplerPolicy& policy, SamplerState& state,
                     Example& x, double p_current, std::int64_t t,
                     const Rng& rng);

/// Convenience wrapper returning the kept example or nothing.
std::optional<Example> apply_copy(const SamplerPolicy& policy,
                                  SamplerState& state, const Example& x,
                                  double p_current, std::int64_t t,
                                  const Rng& rng);

}  // namespace ctrlab
