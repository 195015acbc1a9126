#include "serkit/prng.hpp"

#include "serkit/errors.hpp"

namespace ser {

namespace {

inline uint64_t rotl(uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

uint64_t splitmix64_next(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Prng::Prng(uint64_t seed) {
  uint64_t s = seed;
  for (auto& word : state_) {
    word = splitmix64_next(s);
  }
}

uint64_t Prng::next_u64() {
  const uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

uint64_t Prng::uniform_below(uint64_t n) {
  if (n == 0) {
    throw InputError("uniform_below: n must be positive");
  }
  // Reject draws from the tail of the 2^64 range that would bias the
  // modulus. threshold = (2^64 - n) mod n, so accepted x values cover a
  // whole number of copies of [0, n).
  const uint64_t threshold = (-n) % n;
  for (;;) {
    const uint64_t x = next_u64();
    if (x >= threshold) {
      return x % n;
    }
  }
}

double Prng::uniform_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Prng::uniform_range(double lo, double hi) {
  return lo + (hi - lo) * uniform_double();
}

}  // namespace ser
