#include "serkit/augment.hpp"

#include <string>

#include "serkit/errors.hpp"

namespace ser {

namespace {

MaskSpec draw_mask(MaskAxis axis, int extent, int max_length, Prng& rng) {
  MaskSpec mask;
  mask.axis = axis;
  const int cap = std::min(max_length, extent);
  mask.length = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(cap) + 1));
  mask.start =
      static_cast<int>(rng.uniform_below(static_cast<uint64_t>(extent - mask.length) + 1));
  return mask;
}

}  // namespace

std::vector<MaskSpec> sample_masks(int n_frames, int n_bins,
                                   const SpecAugmentParams& params, Prng& rng) {
  if (n_frames < 1 || n_bins < 1) {
    throw InputError("sample_masks: gram extents must be positive");
  }
  if (params.time_mask_max < 0 || params.freq_mask_max < 0 ||
      params.n_time_masks < 0 || params.n_freq_masks < 0) {
    throw InputError("sample_masks: negative parameter");
  }

  std::vector<MaskSpec> masks;
  masks.reserve(params.n_time_masks + params.n_freq_masks);
  for (int i = 0; i < params.n_time_masks; ++i) {
    masks.push_back(draw_mask(MaskAxis::kTime, n_frames, params.time_mask_max, rng));
  }
  for (int i = 0; i < params.n_freq_masks; ++i) {
    masks.push_back(draw_mask(MaskAxis::kFreq, n_bins, params.freq_mask_max, rng));
  }
  return masks;
}

Matrix apply_masks(const Matrix& gram, std::span<const MaskSpec> masks) {
  Matrix out = gram;
  for (const auto& mask : masks) {
    const int extent = mask.axis == MaskAxis::kTime ? gram.rows() : gram.cols();
    if (mask.length < 0 || mask.start < 0 || mask.start + mask.length > extent) {
      throw InputError("apply_masks: mask [" + std::to_string(mask.start) + ", " +
                       std::to_string(mask.start + mask.length) +
                       ") does not fit extent " + std::to_string(extent));
    }
    if (mask.axis == MaskAxis::kTime) {
      for (int t = mask.start; t < mask.start + mask.length; ++t) {
        float* row = out.row(t);
        for (int c = 0; c < out.cols(); ++c) {
          row[c] = 0.0f;
        }
      }
    } else {
      for (int t = 0; t < out.rows(); ++t) {
        float* row = out.row(t);
        for (int c = mask.start; c < mask.start + mask.length; ++c) {
          row[c] = 0.0f;
        }
      }
    }
  }
  return out;
}

}  // namespace ser
