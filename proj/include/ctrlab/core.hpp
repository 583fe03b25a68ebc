#pragma once

// Shared domain types, feature hashing and the keyed random source.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctrlab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for invalid configuration values. `key()` names the offending
/// setting using dotted paths (e.g. "stream.base_ctr").
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct Feature {
  std::uint32_t field = 0;
  std::uint64_t index = 0;

  friend bool operator==(const Feature&, const Feature&) = default;
};

/// One impression. Features hold at most one hashed index per field.
struct Example {
  std::int64_t t = 0;
  std::vector<Feature> features;
  std::uint8_t label = 0;
  double weight = 1.0;

  friend bool operator==(const Example&, const Example&) = default;
};

/// Checks the Example invariants against a hash dimension; throws Error.
void validate_example(const Example& x, std::uint64_t dimension);

struct HashConfig {
  std::uint64_t dimension = 1024;
  std::uint64_t salt = 0;

  void validate() const;
  std::uint64_t mask() const noexcept { return dimension - 1; }
  friend bool operator==(const HashConfig&, const HashConfig&) = default;
};

inline bool is_power_of_two(std::uint64_t v) noexcept {
  return v != 0 && (v & (v - 1)) == 0;
}

/// 64-bit finalizer from splitmix64.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// FNV-1a over bytes.
constexpr std::uint64_t fnv1a(std::string_view bytes) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::uint64_t hash_feature(std::uint32_t field_id, std::string_view raw_value,
                           const HashConfig& cfg);

/// Same as hashing the 8 little-endian bytes of `token`.
std::uint64_t hash_feature(std::uint32_t field_id, std::uint64_t token,
                           const HashConfig& cfg);

/// Counter-based random source. Every draw is a pure function of
/// (seed, stream name, key), so components never perturb each other.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view stream_name) noexcept
      : key_(mix64(seed ^ mix64(fnv1a(stream_name)))) {}

  template <typename... K>
  std::uint64_t bits(K... key) const noexcept {
    std::uint64_t h = key_;
    ((h = mix64(h ^ mix64(static_cast<std::uint64_t>(key)))), ...);
    return mix64(h);
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  template <typename... K>
  double uniform01(K... key) const noexcept {
    return static_cast<double>(bits(key...) >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller on two sub-keys.
  template <typename... K>
  double normal(K... key) const noexcept {
    const double u1 =
        (static_cast<double>(bits(key..., 0xB0ull) >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01(key..., 0xB1ull);
    return box_muller(u1, u2);
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  static double box_muller(double u1, double u2) noexcept;
  std::uint64_t key_;
};

template <typename... K>
double uniform01(const Rng& rng, K... key) noexcept {
  return rng.uniform01(key...);
}

}  // namespace ctrlab
