#pragma once

// Hashed CTR predictors (linear, or one hidden ReLU layer over sum-pooled
// field embeddings) trained with per-coordinate AdaGrad.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ctrlab/core.hpp"

namespace ctrlab {

inline constexpr double kPredictionClamp = 1e-7;
inline constexpr double kAdagradEpsilon = 1e-8;
inline constexpr double kDefaultLearningRate = 0.05;

enum class ArchKind : std::uint32_t { linear = 0, mlp = 1 };

struct ModelArch {
  ArchKind kind = ArchKind::linear;
  HashConfig hash;
  std::uint32_t hidden = 0;

  /// linear: D + 1. mlp: (D + 1) * H embedding rows and hidden bias,
  /// plus H + 1 for the output head.
  std::uint64_t param_count() const noexcept;
  void validate() const;
  /// Short human-readable tag, e.g. "linear-D4096" or "mlp-D4096-H16".
  std::string label() const;

  friend bool operator==(const ModelArch&, const ModelArch&) = default;
};

struct GradientEntry {
  std::size_t index = 0;
  double value = 0.0;
};
/// Sparse gradient with unique indices.
using SparseGradient = std::vector<GradientEntry>;

class CtrModel {
 public:
  /// Linear models start at zero; MLP weights are drawn from a keyed
  /// uniform in [-0.1, 0.1) so hidden units are not symmetric.
  CtrModel(const ModelArch& arch, std::uint64_t init_seed);

  const ModelArch& arch() const noexcept { return arch_; }
  std::uint64_t param_count() const noexcept { return arch_.param_count(); }

  double score(const Example& x) const;
  double predict_unclamped(const Example& x) const;
  /// sigmoid(score) clamped to [1e-7, 1 - 1e-7].
  double predict(const Example& x) const;

  /// Returns x.weight * logloss(sigmoid(score), target) and writes its
  /// gradient with respect to every touched parameter into `grad`.
  double loss_and_gradient(const Example& x, double target,
                           SparseGradient& grad) const;

  /// AdaGrad: acc += g^2, then theta -= lr * g / sqrt(acc + eps).
  void apply_gradient(const SparseGradient& grad, double lr);

  void grad_step(const Example& x, double target, double lr);

  std::span<const double> params() const noexcept { return params_; }
  std::span<double> mutable_params() noexcept { return params_; }
  std::span<const double> accumulators() const noexcept { return accum_; }

  /// Binary checkpoint; little-endian, IEEE-754 bit patterns preserved.
  void save(std::ostream& os) const;
  static CtrModel load(std::istream& is);
  void save_file(const std::string& path) const;
  static CtrModel load_file(const std::string& path);

  friend bool operator==(const CtrModel& a, const CtrModel& b);

 private:
  struct Row {
    std::uint64_t index;
    double multiplicity;
  };
  void unique_rows(const Example& x, std::vector<Row>& rows) const;
  double mlp_forward(const std::vector<Row>& rows,
                     std::vector<double>& hidden) const;

  ModelArch arch_;
  std::vector<double> params_;
  std::vector<double> accum_;
  SparseGradient scratch_;
};

}  // namespace ctrlab
