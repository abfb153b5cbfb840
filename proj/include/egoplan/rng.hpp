#pragma once

#include <cstdint>
#include <random>

namespace egoplan {

/// mt19937_64 with hand-rolled uniform draws so that streams are
/// bit-stable across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double u01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  std::uint64_t below(std::uint64_t n) { return eng_() % n; }

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

/// Cheap seed/stream mixer for deriving per-episode seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace egoplan
