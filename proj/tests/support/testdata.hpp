#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "serkit/audio_io.hpp"
#include "serkit/training.hpp"

namespace testsupport {

// Minimal RIFF writers, independent of the reader under test.
void write_wav_pcm16(const std::string& path, const std::vector<int16_t>& samples,
                     int sample_rate, int n_channels = 1);
void write_wav_float32(const std::string& path, const std::vector<float>& samples,
                       int sample_rate);
// Arbitrary bytes, for malformed-file tests.
void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes);

// A clip whose spectral content depends on the class: each class mixes two
// sinusoids from its own frequency band, with a little per-clip jitter and
// noise so the samples are not identical.
std::vector<float> sinusoid_clip(int label, uint64_t clip_seed, int n_samples,
                                 int sample_rate);

// In-memory feature datasets built through the real pipeline (stft, mel
// filterbank, optional DCT), used by the trainability tests.
ser::FeatureDataset sinusoid_logmel_dataset(const std::array<int, 3>& per_class,
                                            uint64_t seed);
ser::FeatureDataset sinusoid_mfcc_dataset(const std::array<int, 3>& per_class,
                                          uint64_t seed, int n_coeffs = 40);

// Writes per_class[c] PCM16 clips (16 kHz, 0.05 s) plus a manifest.csv into
// dir and returns the manifest path.
std::string write_sinusoid_corpus(const std::string& dir,
                                  const std::array<int, 3>& per_class,
                                  uint64_t seed);

}  // namespace testsupport
