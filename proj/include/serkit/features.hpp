#pragma once

#include "serkit/audio_io.hpp"
#include "serkit/matrix.hpp"

namespace ser {

// Frames are rows. LogMelGram is T x n_mels, MfccGram is T x n_coeffs.
using LogMelGram = Matrix;
using MfccGram = Matrix;

// Power values below this are clamped before the log.
inline constexpr double kLogFloor = 1e-10;

struct StftParams {
  int window_size = 1024;
  int hop = 320;
};

struct Spectrogram {
  Matrix power;  // T x (window_size / 2 + 1)
  int window_size = 0;
  int hop = 0;
};

// Periodic Hann window, frames centered via reflect padding so that frame t
// covers samples around t * hop. The frame count is floor(n / hop) + 1, so
// even a one-sample waveform yields one frame. Bins hold |X_k|^2 for
// k = 0 .. window_size/2, computed in double and stored as float.
Spectrogram stft(const Waveform& wave, const StftParams& params = {});

struct MelParams {
  int n_mels = 64;
  double f_min = 50.0;
  double f_max = 14000.0;
};

struct MelFilterbank {
  Matrix weights;  // n_mels x (window_size / 2 + 1)
  MelParams params;
};

// Triangular filters with corners equally spaced on the HTK mel scale
// (2595 * log10(1 + f / 700)), evaluated at the FFT bin center frequencies,
// peak height 1, no area normalization. A filter that covers no bin at all
// raises InputError since its log output would be pinned to the floor.
MelFilterbank build_mel_filterbank(int window_size, int sample_rate,
                                   const MelParams& params = {});

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// log(max(mel_power, kLogFloor)), natural log.
LogMelGram log_mel(const Spectrogram& spec, const MelFilterbank& bank);

// Orthonormal DCT-II over each frame of the log-mel gram, keeping the first
// n_coeffs coefficients (including the 0th).
MfccGram mfcc(const LogMelGram& log_mel_frames, int n_coeffs = 40);

}  // namespace ser
