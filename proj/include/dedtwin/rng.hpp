#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dedtwin {

// Stateless counter-based generator: the draw for (seed, stream, index) is a
// pure function of its arguments, so any sample can be regenerated without
// replaying the ones before it.
class CounterRng {
public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t bits(std::uint64_t stream, std::uint64_t index) const noexcept {
    std::uint64_t x = mix(seed_ ^ mix(stream + 0x632be59bd9b4e019ULL));
    return mix(x + index * 0x9e3779b97f4a7c15ULL);
  }

  // Uniform in the open interval (0, 1).
  double uniform(std::uint64_t stream, std::uint64_t index) const noexcept {
    return (static_cast<double>(bits(stream, index) >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller on two decorrelated uniforms.
  double normal(std::uint64_t stream, std::uint64_t index) const noexcept {
    const double u1 = uniform(stream, 2 * index);
    const double u2 = uniform(stream, 2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
};

}  // namespace dedtwin
