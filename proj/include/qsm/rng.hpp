#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace qsm {

// Counter-addressed random stream: each (stream, counter) pair owns an
// independent generator, so draws do not depend on evaluation order. State is
// seeded by the splitmix64 finalizer over (seed, stream, counter) and
// advanced by xorshift64*. Fully specified here so outputs are reproducible
// across platforms.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    state_ = mix(seed + 0x9E3779B97F4A7C15ULL * (stream + 1) + 0xD1B54A32D192ED03ULL * (counter + 1));
    if (state_ == 0) state_ = 0x9E3779B97F4A7C15ULL;
  }

  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  // xorshift64* step
  std::uint64_t next() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
  }

  // Uniform on (0,1), never 0 or 1: top 53 bits plus a half-ulp offset.
  double uniform01() { return (double(next() >> 11) + 0.5) * 0x1.0p-53; }

  // Box-Muller pair of independent standard normals.
  std::pair<double, double> gaussian_pair() {
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double w = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(w), r * std::sin(w)};
  }

 private:
  std::uint64_t state_;
};

}  // namespace qsm
