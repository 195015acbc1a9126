#pragma once

#include <span>
#include <vector>

#include "serkit/matrix.hpp"
#include "serkit/prng.hpp"

namespace ser {

struct SpecAugmentParams {
  int time_mask_max = 64;  // frames
  int freq_mask_max = 8;   // bins
  int n_time_masks = 2;
  int n_freq_masks = 2;
};

enum class MaskAxis {
  kTime,
  kFreq,
};

struct MaskSpec {
  MaskAxis axis = MaskAxis::kTime;
  int start = 0;
  int length = 0;  // may be zero, in which case the mask is a no-op
};

// Draws the mask geometry without touching any data. Draw order is fixed:
// all time masks first, then all frequency masks, and for each mask the
// length is drawn before the start. Lengths are uniform on
// {0, ..., min(max, extent)} inclusive and starts uniform on
// {0, ..., extent - length}, so a mask never hangs off the edge even when
// the gram is shorter than the configured maximum.
std::vector<MaskSpec> sample_masks(int n_frames, int n_bins,
                                   const SpecAugmentParams& params, Prng& rng);

// Returns a copy of the input with the masked frames / bins zeroed. The
// input is never modified. Masks that do not fit the matrix raise InputError.
Matrix apply_masks(const Matrix& gram, std::span<const MaskSpec> masks);

}  // namespace ser
