#include "ctrlab/core.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace ctrlab {

void HashConfig::validate() const {
  if (dimension < 2 || !is_power_of_two(dimension))
    throw ConfigError("model.dimension", "must be a power of two >= 2, got " +
                                            std::to_string(dimension));
}

void validate_example(const Example& x, std::uint64_t dimension) {
  if (!(x.weight > 0.0) || !std::isfinite(x.weight))
    throw Error("example t=" + std::to_string(x.t) + ": weight must be > 0");
  if (x.label > 1)
    throw Error("example t=" + std::to_string(x.t) + ": label must be 0 or 1");
  for (std::size_t i = 0; i < x.features.size(); ++i) {
    if (x.features[i].index >= dimension)
      throw Error("example t=" + std::to_string(x.t) +
                  ": hashed index out of range");
    for (std::size_t j = 0; j < i; ++j)
      if (x.features[j].field == x.features[i].field)
        throw Error("example t=" + std::to_string(x.t) +
                    ": duplicate field " + std::to_string(x.features[i].field));
  }
}

std::uint64_t hash_feature(std::uint32_t field_id, std::string_view raw_value,
                           const HashConfig& cfg) {
  // field id is folded in before the value bytes so equal values in
  // different fields hash over distinct key material
  std::uint64_t h = mix64(cfg.salt ^ mix64(0xF1E1D000ull + field_id));
  for (unsigned char c : raw_value) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return mix64(h) & cfg.mask();
}

std::uint64_t hash_feature(std::uint32_t field_id, std::uint64_t token,
                           const HashConfig& cfg) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i)
    bytes[i] = static_cast<char>((token >> (8 * i)) & 0xFF);
  return hash_feature(field_id, std::string_view(bytes.data(), bytes.size()),
                      cfg);
}

double Rng::box_muller(double u1, double u2) noexcept {
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace ctrlab
