#pragma once

#include <cstdint>
#include <vector>

namespace ser {

// Deterministic generator used everywhere randomness is needed: weight init,
// shuffling, dropout, mask sampling. xoshiro256** state, seeded by feeding
// the user seed through splitmix64 so that small seeds (0, 1, 2, ...) still
// yield well-mixed states. Identical seeds give identical streams on every
// platform; nothing here depends on std::random devices.
class Prng {
 public:
  explicit Prng(uint64_t seed);

  uint64_t next_u64();

  // Unbiased draw from {0, ..., n-1} by rejection sampling. n == 0 throws.
  uint64_t uniform_below(uint64_t n);

  // 53-bit uniform in [0, 1).
  double uniform_double();

  // Uniform in [lo, hi).
  double uniform_range(double lo, double hi);

  // In-place Fisher-Yates, iterating from the back, one uniform_below per
  // step. The element order after shuffling is a function of the seed only.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  uint64_t state_[4];
};

// The seeding primitive, exposed so tests can pin its known output sequence.
uint64_t splitmix64_next(uint64_t& state);

}  // namespace ser
