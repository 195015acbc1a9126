#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "serkit/label.hpp"

namespace ser {

struct Waveform {
  std::vector<float> samples;  // mono, in [-1, 1] for integer sources
  int sample_rate = 0;
};

// Reads a RIFF/WAVE file. Accepts PCM16 and IEEE float32, mono or stereo;
// stereo is averaged down to mono. Anything else raises UnsupportedError,
// malformed bytes raise FormatError, unreadable paths raise IoError.
Waveform read_wav(const std::string& path);

// Windowed-sinc resampler (Kaiser window, beta 8.6, 64 zero crossings per
// side). Identical rates return the input bit-for-bit. Output length is
// round(n * target_rate / source_rate).
Waveform resample(const Waveform& input, int target_rate);

struct ManifestEntry {
  std::string path;
  Label label = Label::kNeutral;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
};

// CSV with header "path,label". Unknown labels raise LabelError, structural
// problems raise FormatError.
Manifest read_manifest(const std::string& path);
void write_manifest(const Manifest& manifest, const std::string& path);

struct SplitSpec {
  double train_fraction = 0.8;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  uint64_t seed = 0;
};

struct SplitResult {
  Manifest train;
  Manifest valid;
  Manifest test;
};

// Deterministic stratified split. Entries are grouped by label, each group
// is shuffled with the seed, then cut into train/valid/test. Within each
// class the train count is floor(train_fraction * n), the valid count is
// round-half-up(valid_fraction * n), and the test set takes the remainder;
// when that leaves an empty valid set but a non-empty test set, one entry
// moves from test to valid. Classes with fewer than three entries raise
// InputError, as do fraction sets that are not positive and summing to one.
SplitResult stratified_split(const Manifest& manifest, const SplitSpec& spec);

}  // namespace ser
