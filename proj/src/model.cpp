#include "ctrlab/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ctrlab/numeric.hpp"

namespace ctrlab {

namespace {

constexpr std::array<char, 8> kMagic = {'C', 'T', 'R', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}
void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}
std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw Error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}
std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw Error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

std::uint64_t ModelArch::param_count() const noexcept {
  const std::uint64_t d = hash.dimension;
  if (kind == ArchKind::linear) return d + 1;
  const std::uint64_t h = hidden;
  return (d + 1) * h + h + 1;
}

void ModelArch::validate() const {
  hash.validate();
  if (kind == ArchKind::mlp && hidden < 1)
    throw ConfigError("model.hidden", "mlp needs at least one hidden unit");
  if (kind == ArchKind::linear && hidden != 0)
    throw ConfigError("model.hidden", "linear model takes no hidden units");
  if (param_count() > (1ull << 28))
    throw ConfigError("model", "parameter count above 2^28");
}

std::string ModelArch::label() const {
  std::string s = kind == ArchKind::linear ? "linear" : "mlp";
  s += "-D" + std::to_string(hash.dimension);
  if (kind == ArchKind::mlp) s += "-H" + std::to_string(hidden);
  return s;
}

CtrModel::CtrModel(const ModelArch& arch, std::uint64_t init_seed)
    : arch_(arch) {
  arch_.validate();
  const std::size_t n = arch_.param_count();
  params_.assign(n, 0.0);
  accum_.assign(n, 0.0);
  if (arch_.kind == ArchKind::mlp) {
    const Rng rng(init_seed, "model.init");
    const std::size_t h = arch_.hidden;
    const std::size_t d = arch_.hash.dimension;
    for (std::size_t i = 0; i < d * h; ++i)
      params_[i] = 0.2 * rng.uniform01(i) - 0.1;
    // hidden bias stays zero; head weights random, output bias zero
    for (std::size_t j = 0; j < h; ++j)
      params_[(d + 1) * h + j] = 0.2 * rng.uniform01(d * h + j) - 0.1;
  }
}

void CtrModel::unique_rows(const Example& x, std::vector<Row>& rows) const {
  rows.clear();
  for (const Feature& f : x.features) {
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const Row& r) { return r.index == f.index; });
    if (it != rows.end())
      it->multiplicity += 1.0;
    else
      rows.push_back({f.index, 1.0});
  }
}

double CtrModel::mlp_forward(const std::vector<Row>& rows,
                             std::vector<double>& hidden) const {
  const std::size_t h = arch_.hidden;
  const std::size_t d = arch_.hash.dimension;
  hidden.assign(params_.begin() + static_cast<std::ptrdiff_t>(d * h),
                params_.begin() + static_cast<std::ptrdiff_t>((d + 1) * h));
  for (const Row& r : rows) {
    const double* e = &params_[r.index * h];
    for (std::size_t j = 0; j < h; ++j) hidden[j] += r.multiplicity * e[j];
  }
  const double* v = &params_[(d + 1) * h];
  double s = params_[(d + 2) * h];
  for (std::size_t j = 0; j < h; ++j)
    if (hidden[j] > 0.0) s += v[j] * hidden[j];
  return s;
}

double CtrModel::score(const Example& x) const {
  if (arch_.kind == ArchKind::linear) {
    double s = params_.back();
    for (const Feature& f : x.features) s += params_[f.index];
    return s;
  }
  thread_local std::vector<Row> rows;
  thread_local std::vector<double> hidden;
  unique_rows(x, rows);
  return mlp_forward(rows, hidden);
}

double CtrModel::predict_unclamped(const Example& x) const {
  return sigmoid(score(x));
}

double CtrModel::predict(const Example& x) const {
  return std::clamp(predict_unclamped(x), kPredictionClamp,
                    1.0 - kPredictionClamp);
}

double CtrModel::loss_and_gradient(const Example& x, double target,
                                   SparseGradient& grad) const {
  thread_local std::vector<Row> rows;
  thread_local std::vector<double> hidden;
  unique_rows(x, rows);
  grad.clear();

  double s;
  if (arch_.kind == ArchKind::linear) {
    s = params_.back();
    for (const Row& r : rows) s += r.multiplicity * params_[r.index];
  } else {
    s = mlp_forward(rows, hidden);
  }
  const double p = sigmoid(s);
  // soft-target logloss in a form that stays finite for large |s|
  const double softplus_pos = s > 0 ? s + std::log1p(std::exp(-s))
                                    : std::log1p(std::exp(s));
  const double loss = x.weight * (softplus_pos - target * s);
  const double ds = x.weight * (p - target);

  if (arch_.kind == ArchKind::linear) {
    for (const Row& r : rows) grad.push_back({r.index, r.multiplicity * ds});
    grad.push_back({params_.size() - 1, ds});
    return loss;
  }

  const std::size_t h = arch_.hidden;
  const std::size_t d = arch_.hash.dimension;
  const double* v = &params_[(d + 1) * h];
  for (const Row& r : rows)
    for (std::size_t j = 0; j < h; ++j)
      if (hidden[j] > 0.0)
        grad.push_back({r.index * h + j, r.multiplicity * ds * v[j]});
  for (std::size_t j = 0; j < h; ++j)
    if (hidden[j] > 0.0) grad.push_back({d * h + j, ds * v[j]});
  for (std::size_t j = 0; j < h; ++j)
    if (hidden[j] > 0.0) grad.push_back({(d + 1) * h + j, ds * hidden[j]});
  grad.push_back({(d + 2) * h, ds});
  return loss;
}

void CtrModel::apply_gradient(const SparseGradient& grad, double lr) {
  if (lr == 0.0) return;
  for (const GradientEntry& g : grad) {
    double& acc = accum_[g.index];
    acc += g.value * g.value;
    params_[g.index] -= lr * g.value / std::sqrt(acc + kAdagradEpsilon);
  }
}

void CtrModel::grad_step(const Example& x, double target, double lr) {
  if (lr == 0.0) return;
  loss_and_gradient(x, target, scratch_);
  apply_gradient(scratch_, lr);
}

void CtrModel::save(std::ostream& os) const {
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(arch_.kind));
  put_u64(os, arch_.hash.dimension);
  put_u64(os, arch_.hash.salt);
  put_u32(os, arch_.hidden);
  put_u32(os, 0);
  put_u64(os, params_.size());
  for (double v : params_) put_u64(os, std::bit_cast<std::uint64_t>(v));
  for (double v : accum_) put_u64(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw Error("checkpoint: write failed");
}

CtrModel CtrModel::load(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic)
    throw Error("checkpoint: bad magic");
  const std::uint32_t version = get_u32(is);
  if (version != kCheckpointVersion)
    throw Error("checkpoint: unsupported version " + std::to_string(version));
  ModelArch arch;
  const std::uint32_t kind = get_u32(is);
  if (kind > 1) throw Error("checkpoint: unknown architecture");
  arch.kind = static_cast<ArchKind>(kind);
  arch.hash.dimension = get_u64(is);
  arch.hash.salt = get_u64(is);
  arch.hidden = get_u32(is);
  get_u32(is);
  const std::uint64_t n = get_u64(is);
  arch.validate();
  if (n != arch.param_count())
    throw Error("checkpoint: parameter count does not match architecture");
  CtrModel m(arch, 0);
  for (double& v : m.params_) v = std::bit_cast<double>(get_u64(is));
  for (double& v : m.accum_) v = std::bit_cast<double>(get_u64(is));
  return m;
}

void CtrModel::save_file(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("checkpoint: cannot open " + path + " for writing");
  save(os);
}

CtrModel CtrModel::load_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("checkpoint missing: " + path);
  return load(is);
}

bool operator==(const CtrModel& a, const CtrModel& b) {
  auto same_bits = [](std::span<const double> x, std::span<const double> y) {
    return x.size() == y.size() &&
           std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
  };
  return a.arch_ == b.arch_ && same_bits(a.params_, b.params_) &&
         same_bits(a.accum_, b.accum_);
}

}  // namespace ctrlab
