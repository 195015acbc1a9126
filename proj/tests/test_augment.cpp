#include <set>
#include <vector>

#include "doctest.h"
#include "serkit/augment.hpp"
#include "serkit/errors.hpp"
#include "serkit/matrix.hpp"
#include "serkit/prng.hpp"

using ser::MaskAxis;
using ser::MaskSpec;
using ser::SpecAugmentParams;

TEST_CASE("sampling is deterministic and ordered time-then-frequency") {
  const SpecAugmentParams params;  // 64 / 8, two masks each
  ser::Prng a(77), b(77);
  const auto masks = ser::sample_masks(300, 64, params, a);
  const auto again = ser::sample_masks(300, 64, params, b);

  REQUIRE(masks.size() == 4);
  CHECK(masks[0].axis == MaskAxis::kTime);
  CHECK(masks[1].axis == MaskAxis::kTime);
  CHECK(masks[2].axis == MaskAxis::kFreq);
  CHECK(masks[3].axis == MaskAxis::kFreq);
  for (size_t i = 0; i < masks.size(); ++i) {
    CHECK(masks[i].axis == again[i].axis);
    CHECK(masks[i].start == again[i].start);
    CHECK(masks[i].length == again[i].length);
  }
}

TEST_CASE("mask draws respect bounds and reach both extremes") {
  const SpecAugmentParams params{64, 8, 2, 2};
  bool time_max_seen = false, time_zero_seen = false;
  bool freq_max_seen = false, freq_zero_seen = false;
  ser::Prng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto masks = ser::sample_masks(150, 64, params, rng);
    for (const auto& mask : masks) {
      const int extent = mask.axis == MaskAxis::kTime ? 150 : 64;
      const int cap = mask.axis == MaskAxis::kTime ? 64 : 8;
      CHECK(mask.length >= 0);
      CHECK(mask.length <= cap);
      CHECK(mask.start >= 0);
      CHECK(mask.start + mask.length <= extent);
      if (mask.axis == MaskAxis::kTime) {
        time_max_seen = time_max_seen || mask.length == cap;
        time_zero_seen = time_zero_seen || mask.length == 0;
      } else {
        freq_max_seen = freq_max_seen || mask.length == cap;
        freq_zero_seen = freq_zero_seen || mask.length == 0;
      }
    }
  }
  // The draw is inclusive on both ends, so both extremes must appear over
  // 4000 draws per axis.
  CHECK(time_max_seen);
  CHECK(time_zero_seen);
  CHECK(freq_max_seen);
  CHECK(freq_zero_seen);
}

TEST_CASE("short grams clamp the length cap to the extent") {
  const SpecAugmentParams params{64, 8, 2, 2};
  ser::Prng rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    const auto masks = ser::sample_masks(10, 5, params, rng);
    for (const auto& mask : masks) {
      if (mask.axis == MaskAxis::kTime) {
        CHECK(mask.length <= 10);
        CHECK(mask.start + mask.length <= 10);
      } else {
        CHECK(mask.length <= 5);
        CHECK(mask.start + mask.length <= 5);
      }
    }
  }
}

TEST_CASE("apply_masks zeroes exactly the union of the rectangles") {
  ser::Matrix gram(12, 7);
  for (int t = 0; t < 12; ++t) {
    for (int f = 0; f < 7; ++f) {
      gram.at(t, f) = static_cast<float>(1 + t * 7 + f);
    }
  }
  const std::vector<MaskSpec> masks{
      {MaskAxis::kTime, 2, 3},   // rows 2..4
      {MaskAxis::kTime, 4, 2},   // rows 4..5, overlaps the first
      {MaskAxis::kFreq, 5, 2},   // cols 5..6
      {MaskAxis::kFreq, 0, 0},   // empty, a no-op
  };
  const ser::Matrix masked = ser::apply_masks(gram, masks);

  // Oracle bitmap built directly from the rectangles.
  std::set<std::pair<int, int>> dead;
  for (int t = 2; t <= 5; ++t) {
    for (int f = 0; f < 7; ++f) {
      dead.insert({t, f});
    }
  }
  for (int t = 0; t < 12; ++t) {
    for (int f = 5; f <= 6; ++f) {
      dead.insert({t, f});
    }
  }

  for (int t = 0; t < 12; ++t) {
    for (int f = 0; f < 7; ++f) {
      if (dead.count({t, f})) {
        CHECK(masked.at(t, f) == 0.0f);
      } else {
        CHECK(masked.at(t, f) == gram.at(t, f));  // bit-identical
      }
    }
  }

  // The input is untouched.
  CHECK(gram.at(3, 3) == static_cast<float>(1 + 3 * 7 + 3));
}

TEST_CASE("masks outside the gram are rejected") {
  ser::Matrix gram(10, 8);
  CHECK_THROWS_AS(
      ser::apply_masks(gram, std::vector<MaskSpec>{{MaskAxis::kTime, 8, 3}}),
      ser::InputError);
  CHECK_THROWS_AS(
      ser::apply_masks(gram, std::vector<MaskSpec>{{MaskAxis::kFreq, -1, 2}}),
      ser::InputError);
}

TEST_CASE("empirical time-mask length matches the uniform mean") {
  const SpecAugmentParams params{64, 8, 2, 2};
  ser::Prng rng(12345);
  double total = 0.0;
  int count = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    const auto masks = ser::sample_masks(400, 64, params, rng);
    for (const auto& mask : masks) {
      if (mask.axis == MaskAxis::kTime) {
        total += mask.length;
        ++count;
      }
    }
  }
  // length ~ U{0..64}: mean 32, and the sample mean over 10k draws has a
  // standard error of about 0.19.
  CHECK(count == 10000);
  CHECK(total / count == doctest::Approx(32.0).epsilon(0.03));
}
