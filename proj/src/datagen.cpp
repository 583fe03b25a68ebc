#include "ctrlab/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "ctrlab/numeric.hpp"

namespace ctrlab {

namespace {

constexpr std::uint64_t kLatentSaltTag = 0x6C6174656E74ull;  // "latent"
constexpr std::size_t kSumChunk = 4096;

}  // namespace

void StreamSpec::validate() const {
  if (n_fields < 1) throw ConfigError("stream.n_fields", "must be >= 1");
  if (vocab_per_field < 2)
    throw ConfigError("stream.vocab_per_field", "must be >= 2");
  if (!(zipf_exponent >= 0.0) || !std::isfinite(zipf_exponent))
    throw ConfigError("stream.zipf_exponent", "must be finite and >= 0");
  if (!(base_ctr > 0.0 && base_ctr < 1.0))
    throw ConfigError("stream.base_ctr",
                      "must be in (0,1), got " + std::to_string(base_ctr));
  if (drift_period < 1) throw ConfigError("stream.drift_period", "must be >= 1");
  if (!(drift_magnitude >= 0.0) || !std::isfinite(drift_magnitude))
    throw ConfigError("stream.drift_magnitude", "must be finite and >= 0");
  if (!is_power_of_two(ground_truth_dim) || ground_truth_dim > (1ull << 24))
    throw ConfigError("stream.ground_truth_dim",
                      "must be a power of two <= 2^24");
  if (!(weight_scale >= 0.0) || !std::isfinite(weight_scale))
    throw ConfigError("stream.weight_scale", "must be finite and >= 0");
}

void validate_range(std::int64_t t_start, std::int64_t t_end) {
  if (t_start < 0) throw Error("stream range: t_start must be >= 0");
  if (t_end < t_start) throw Error("stream range: t_end must be >= t_start");
}

ClickStream::ClickStream(const StreamSpec& spec, double intercept)
    : spec_(spec),
      intercept_(intercept),
      token_rng_(spec.seed, "datagen.tokens"),
      label_rng_(spec.seed, "datagen.labels"),
      drift_rng_(spec.seed, "datagen.drift") {
  spec_.validate();

  zipf_cdf_.resize(spec_.vocab_per_field);
  double acc = 0.0;
  for (std::uint32_t k = 0; k < spec_.vocab_per_field; ++k) {
    acc += std::pow(static_cast<double>(k + 1), -spec_.zipf_exponent);
    zipf_cdf_[k] = acc;
  }
  for (double& c : zipf_cdf_) c /= acc;
  zipf_cdf_.back() = 1.0;
  const std::size_t guide = zipf_cdf_.size();
  zipf_guide_.resize(guide + 1);
  for (std::size_t k = 0; k <= guide; ++k) {
    const double edge = static_cast<double>(k) / static_cast<double>(guide);
    zipf_guide_[k] = static_cast<std::size_t>(
        std::upper_bound(zipf_cdf_.begin(), zipf_cdf_.end(), edge) -
        zipf_cdf_.begin());
    if (zipf_guide_[k] >= zipf_cdf_.size()) zipf_guide_[k] = zipf_cdf_.size() - 1;
  }

  const HashConfig latent_hash{spec_.ground_truth_dim,
                               mix64(spec_.seed ^ kLatentSaltTag)};
  gt_bucket_.resize(std::size_t{spec_.n_fields} * spec_.vocab_per_field);
  for (std::uint32_t f = 0; f < spec_.n_fields; ++f)
    for (std::uint32_t k = 0; k < spec_.vocab_per_field; ++k)
      gt_bucket_[std::size_t{f} * spec_.vocab_per_field + k] =
          hash_feature(f, std::uint64_t{k}, latent_hash);

  const Rng latent_rng(spec_.seed, "datagen.latent");
  gt_weight_.resize(spec_.ground_truth_dim);
  for (std::uint64_t b = 0; b < spec_.ground_truth_dim; ++b)
    gt_weight_[b] = spec_.weight_scale * latent_rng.normal(b);
}

ClickStream::ClickStream(const StreamSpec& spec) : ClickStream(spec, 0.0) {
  intercept_ = calibrate_intercept(spec_);
}

std::uint32_t ClickStream::zipf_token(double u) const {
  // guide table narrows the inverse-CDF search to a few entries
  const std::size_t g = std::min(zipf_guide_.size() - 2,
                                 static_cast<std::size_t>(
                                     u * static_cast<double>(zipf_guide_.size() - 1)));
  const auto first = zipf_cdf_.begin() + zipf_guide_[g > 0 ? g - 1 : 0];
  const auto last = zipf_cdf_.begin() + zipf_guide_[g + 1] + 1;
  auto it = std::upper_bound(first, std::min(last, zipf_cdf_.end()), u);
  if (it == zipf_cdf_.end()) --it;
  return static_cast<std::uint32_t>(it - zipf_cdf_.begin());
}

void ClickStream::tokens_at(std::int64_t t, std::span<std::uint32_t> out) const {
  for (std::uint32_t f = 0; f < spec_.n_fields; ++f)
    out[f] = zipf_token(token_rng_.uniform01(t, f));
}

std::vector<std::uint32_t> ClickStream::tokens_at(std::int64_t t) const {
  std::vector<std::uint32_t> out(spec_.n_fields);
  tokens_at(t, out);
  return out;
}

double ClickStream::drift_weight(std::uint64_t bucket,
                                 std::int64_t epoch) const {
  return spec_.drift_magnitude * drift_rng_.normal(bucket, epoch);
}

double ClickStream::latent_score(std::span<const std::uint32_t> tokens,
                                 std::int64_t t) const {
  const std::int64_t epoch = epoch_of(t);
  double s = 0.0;
  for (std::uint32_t f = 0; f < spec_.n_fields; ++f) {
    const std::uint64_t b =
        gt_bucket_[std::size_t{f} * spec_.vocab_per_field + tokens[f]];
    s += gt_weight_[b];
    if (spec_.drift_magnitude > 0.0) s += drift_weight(b, epoch);
  }
  return s;
}

double ClickStream::true_ctr(std::span<const std::uint32_t> tokens,
                             std::int64_t t) const {
  return sigmoid(intercept_ + latent_score(tokens, t));
}

std::uint8_t ClickStream::label_at(std::int64_t t, double ctr) const noexcept {
  return label_rng_.uniform01(t) < ctr ? 1 : 0;
}

std::vector<std::uint64_t> ClickStream::feature_table(
    const HashConfig& hash) const {
  std::vector<std::uint64_t> table(std::size_t{spec_.n_fields} *
                                   spec_.vocab_per_field);
  for (std::uint32_t f = 0; f < spec_.n_fields; ++f)
    for (std::uint32_t k = 0; k < spec_.vocab_per_field; ++k)
      table[std::size_t{f} * spec_.vocab_per_field + k] =
          hash_feature(f, std::uint64_t{k}, hash);
  return table;
}

void ClickStream::example_at(std::int64_t t, const HashConfig& hash,
                             Example& out) const {
  example_at(t, hash, {}, out);
}

void ClickStream::example_at(std::int64_t t, const HashConfig& hash,
                             std::span<const std::uint64_t> table,
                             Example& out) const {
  std::uint32_t buf[64];
  std::vector<std::uint32_t> heap;
  std::span<std::uint32_t> tokens;
  if (spec_.n_fields <= 64) {
    tokens = std::span<std::uint32_t>(buf, spec_.n_fields);
  } else {
    heap.resize(spec_.n_fields);
    tokens = heap;
  }
  tokens_at(t, tokens);
  out.t = t;
  out.weight = 1.0;
  out.label = label_at(t, true_ctr(tokens, t));
  out.features.resize(spec_.n_fields);
  for (std::uint32_t f = 0; f < spec_.n_fields; ++f)
    out.features[f] = Feature{
        f, table.empty()
               ? hash_feature(f, std::uint64_t{tokens[f]}, hash)
               : table[std::size_t{f} * spec_.vocab_per_field + tokens[f]]};
}

Example ClickStream::example_at(std::int64_t t, const HashConfig& hash) const {
  Example x;
  example_at(t, hash, x);
  return x;
}

void ClickStream::generate_into(const HashConfig& hash, std::int64_t t_start,
                                std::int64_t t_end,
                                std::vector<Example>& out) const {
  validate_range(t_start, t_end);
  hash.validate();
  const std::int64_t n = t_end - t_start;
  out.resize(static_cast<std::size_t>(n));
  // hashing every token up front only pays off for chunks larger than the
  // vocabulary
  std::vector<std::uint64_t> table;
  if (static_cast<std::uint64_t>(n) * spec_.n_fields >
      std::uint64_t{spec_.n_fields} * spec_.vocab_per_field)
    table = feature_table(hash);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    example_at(t_start + i, hash, table, out[static_cast<std::size_t>(i)]);
}

std::vector<Example> ClickStream::generate(const HashConfig& hash,
                                           std::int64_t t_start,
                                           std::int64_t t_end) const {
  std::vector<Example> out;
  generate_into(hash, t_start, t_end, out);
  return out;
}

std::vector<Example> ClickStream::generate_serial(const HashConfig& hash,
                                                  std::int64_t t_start,
                                                  std::int64_t t_end) const {
  validate_range(t_start, t_end);
  hash.validate();
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(t_end - t_start));
  for (std::int64_t t = t_start; t < t_end; ++t)
    out.push_back(example_at(t, hash));
  return out;
}

LabelCounts ClickStream::count_labels(std::int64_t t_start,
                                      std::int64_t t_end) const {
  validate_range(t_start, t_end);
  std::int64_t pos = 0;
#pragma omp parallel
  {
    std::vector<std::uint32_t> tokens(spec_.n_fields);
#pragma omp for schedule(static) reduction(+ : pos)
    for (std::int64_t t = t_start; t < t_end; ++t) {
      tokens_at(t, tokens);
      pos += label_at(t, true_ctr(tokens, t));
    }
  }
  return {pos, (t_end - t_start) - pos};
}

LabelCounts ClickStream::count_labels_serial(std::int64_t t_start,
                                             std::int64_t t_end) const {
  validate_range(t_start, t_end);
  std::vector<std::uint32_t> tokens(spec_.n_fields);
  std::int64_t pos = 0;
  for (std::int64_t t = t_start; t < t_end; ++t) {
    tokens_at(t, tokens);
    pos += label_at(t, true_ctr(tokens, t));
  }
  return {pos, (t_end - t_start) - pos};
}

void ClickStream::export_records(std::ostream& os, const HashConfig& hash,
                                 std::int64_t t_start,
                                 std::int64_t t_end) const {
  validate_range(t_start, t_end);
  constexpr std::int64_t kChunk = 65536;
  std::vector<Example> chunk;
  std::string line;
  for (std::int64_t a = t_start; a < t_end; a += kChunk) {
    generate_into(hash, a, std::min(t_end, a + kChunk), chunk);
    for (const Example& x : chunk) {
      line = std::to_string(x.t);
      line += ',';
      line += x.label ? '1' : '0';
      line += ',';
      line += format_real(x.weight);
      for (const Feature& f : x.features) {
        line += ',';
        line += std::to_string(f.field);
        line += ':';
        line += std::to_string(f.index);
      }
      line += '\n';
      os << line;
    }
  }
}

std::vector<double> calibration_scores(const ClickStream& stream,
                                       std::size_t n) {
  const Rng rng(stream.spec().seed, "datagen.calibration");
  const std::uint32_t fields = stream.spec().n_fields;
  std::vector<double> scores(n);
#pragma omp parallel
  {
    std::vector<std::uint32_t> tokens(fields);
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
      // draw tokens through the same Zipf law the stream uses, at epoch 0
      const std::int64_t probe_t = static_cast<std::int64_t>(
          rng.bits(i) % static_cast<std::uint64_t>(stream.spec().drift_period));
      stream.tokens_at(probe_t, tokens);
      scores[static_cast<std::size_t>(i)] = stream.latent_score(tokens, probe_t);
    }
  }
  return scores;
}

std::vector<double> calibration_scores_serial(const ClickStream& stream,
                                              std::size_t n) {
  const Rng rng(stream.spec().seed, "datagen.calibration");
  std::vector<std::uint32_t> tokens(stream.spec().n_fields);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t probe_t = static_cast<std::int64_t>(
        rng.bits(static_cast<std::int64_t>(i)) %
        static_cast<std::uint64_t>(stream.spec().drift_period));
    stream.tokens_at(probe_t, tokens);
    scores[i] = stream.latent_score(tokens, probe_t);
  }
  return scores;
}

double marginal_ctr(std::span<const double> scores, double intercept) {
  if (scores.empty()) return sigmoid(intercept);
  const std::size_t chunks = (scores.size() + kSumChunk - 1) / kSumChunk;
  std::vector<double> partial(chunks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < static_cast<std::int64_t>(chunks); ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kSumChunk;
    const std::size_t hi = std::min(scores.size(), lo + kSumChunk);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += sigmoid(intercept + scores[i]);
    partial[static_cast<std::size_t>(c)] = s;
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return total / static_cast<double>(scores.size());
}

double marginal_ctr_serial(std::span<const double> scores, double intercept) {
  if (scores.empty()) return sigmoid(intercept);
  double total = 0.0;
  for (std::size_t lo = 0; lo < scores.size(); lo += kSumChunk) {
    const std::size_t hi = std::min(scores.size(), lo + kSumChunk);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += sigmoid(intercept + scores[i]);
    total += s;
  }
  return total / static_cast<double>(scores.size());
}

double calibrate_intercept(const StreamSpec& spec) {
  const ClickStream raw(spec, 0.0);
  const std::vector<double> scores = calibration_scores(raw);
  double lo = -30.0, hi = 30.0;
  if (!(marginal_ctr(scores, lo) < spec.base_ctr &&
        marginal_ctr(scores, hi) > spec.base_ctr))
    throw Error("calibrate_intercept: base_ctr not bracketed within [-30, 30] "
                "logits; latent weights too large");
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (marginal_ctr(scores, mid) < spec.base_ctr)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace ctrlab
