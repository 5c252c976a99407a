#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace decept {

// Deterministic random source. Uniform and normal draws are derived from the
// raw mt19937_64 stream directly (no std::*_distribution, whose output is
// implementation-defined), so a seed reproduces the same values everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller; draws are cached in pairs.
  double normal();
  // Uniform index in [0, n); n must be positive.
  std::size_t index(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[index(i)]);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable seed for a named parameter block: mixing the run seed with a tag
// keeps each block's init stream independent of which other blocks exist.
std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag);

}  // namespace decept
