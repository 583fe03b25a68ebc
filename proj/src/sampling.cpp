#include "ctrlab/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctrlab/metrics.hpp"
#include "ctrlab/numeric.hpp"

namespace ctrlab {

namespace {

void check_rate(double r, const char* key) {
  if (!(r > 0.0 && r <= 1.0))
    throw ConfigError(key, "rate must be in (0,1], got " + format_real(r));
}

}  // namespace

void SamplerPolicy::validate(std::int64_t hist_start,
                             std::int64_t hist_end) const {
  std::visit(
      [](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        check_rate(s.rate, "sampler.rate");
        if constexpr (std::is_same_v<S, LowLoss>) {
          if (!(s.loss_threshold >= 0.0))
            throw ConfigError("sampler.loss_threshold", "must be >= 0");
        } else if constexpr (std::is_same_v<S, CountUncertainty>) {
          if (!(s.count_scale > 0.0))
            throw ConfigError("sampler.count_scale", "must be > 0");
        }
      },
      signal);
  if (const auto* c = std::get_if<Cutoff>(&schedule)) {
    if (c->t_cut < hist_start || c->t_cut > hist_end)
      throw ConfigError("sampler.t_cut",
                        "must lie within the historical range");
  }
}

double SamplerPolicy::base_rate() const noexcept {
  return std::visit([](const auto& s) { return s.rate; }, signal);
}

bool SamplerPolicy::is_identity() const noexcept {
  const auto* u = std::get_if<UniformNegative>(&signal);
  return u && u->rate == 1.0;
}

std::string SamplerPolicy::describe() const {
  std::string s = std::visit(
      [](const auto& sig) -> std::string {
        using S = std::decay_t<decltype(sig)>;
        if constexpr (std::is_same_v<S, UniformNegative>)
          return "uniform_negative(r=" + format_real(sig.rate) + ")";
        else if constexpr (std::is_same_v<S, LowLoss>)
          return "low_loss(r=" + format_real(sig.rate) +
                 ",tau=" + format_real(sig.loss_threshold) + ")";
        else
          return "count_uncertainty(r=" + format_real(sig.rate) +
                 ",c=" + format_real(sig.count_scale) + ")";
      },
      signal);
  if (const auto* c = std::get_if<Cutoff>(&schedule))
    s += "+cutoff(" + std::to_string(c->t_cut) + ")";
  else
    s += "+continuous";
  return s;
}

SamplerState::SamplerState(std::uint32_t n_fields, std::uint64_t dimension,
                           bool track_counts, double loss_decay)
    : n_fields_(n_fields), dimension_(dimension), decay_(loss_decay) {
  if (!(loss_decay > 0.0 && loss_decay <= 1.0))
    throw ConfigError("sampler.loss_decay", "must be in (0,1]");
  if (track_counts) counts_.assign(std::size_t{n_fields} * dimension, 0);
}

std::uint64_t SamplerState::count(std::uint32_t field,
                                  std::uint64_t index) const {
  if (counts_.empty() || field >= n_fields_ || index >= dimension_) return 0;
  return counts_[std::size_t{field} * dimension_ + index];
}

std::uint64_t SamplerState::min_count(const Example& x) const {
  if (counts_.empty() || x.features.empty()) return 0;
  std::uint64_t m = std::numeric_limits<std::uint64_t>::max();
  for (const Feature& f : x.features) m = std::min(m, count(f.field, f.index));
  return m;
}

void SamplerState::update(const Example& x, double loss) {
  if (!counts_.empty()) {
    for (const Feature& f : x.features) {
      if (f.field >= n_fields_ || f.index >= dimension_)
        throw Error("sampler state: feature outside count table");
      auto& c = counts_[std::size_t{f.field} * dimension_ + f.index];
      if (c != std::numeric_limits<std::uint32_t>::max()) ++c;
    }
  }
  // the first observation seeds the average
  ema_ = seen_ == 0 ? loss : decay_ * loss + (1.0 - decay_) * ema_;
  ++seen_;
}

double importance_weight(double keep_prob) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0))
    throw Error("importance_weight: keep probability must be in (0,1]");
  return 1.0 / keep_prob;
}

double keep_probability(const SamplerPolicy& policy, const SamplerState& state,
                        const Example& x, double p_current, std::int64_t t) {
  if (x.label == 1) return 1.0;
  if (const auto* c = std::get_if<Cutoff>(&policy.schedule))
    if (t >= c->t_cut) return 1.0;
  return std::visit(
      [&](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, UniformNegative>) {
          return s.rate;
        } else if constexpr (std::is_same_v<S, LowLoss>) {
          const double loss = logloss(clamp_probability(p_current), 0);
          return loss < s.loss_threshold ? s.rate : 1.0;
        } else {
          const double m = static_cast<double>(state.min_count(x));
          return std::min(1.0,
                          s.rate * (1.0 + s.count_scale / std::sqrt(1.0 + m)));
        }
      },
      policy.signal);
}

void update_state(SamplerState& state, const Example& x, double loss) {
  if (!(loss >= 0.0)) throw Error("update_state: loss must be >= 0");
  state.update(x, loss);
}

SampleDecision apply(const SamplerPolicy& policy, SamplerState& state,
                     Example& x, double p_current, std::int64_t t,
                     const Rng& rng) {
  const double q = keep_probability(policy, state, x, p_current, t);
  const std::uint64_t counter = state.decisions();
  state.note_decision();
  SampleDecision d{true, q};
  if (q < 1.0) d.kept = rng.uniform01(t, counter) < q;
  update_state(state, x, logloss(clamp_probability(p_current), x.label));
  if (d.kept && q < 1.0) x.weight *= importance_weight(q);
  return d;
}

std::optional<Example> apply_copy(const SamplerPolicy& policy,
                                  SamplerState& state, const Example& x,
                                  double p_current, std::int64_t t,
                                  const Rng& rng) {
  Example copy = x;
  if (!apply(policy, state, copy, p_current, t, rng).kept) return std::nullopt;
  return copy;
}

}  // namespace ctrlab
