#include "serkit/features.hpp"

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "serkit/errors.hpp"

namespace ser {

namespace {

bool is_power_of_two(int n) {
  return n > 0 && (n & (n - 1)) == 0;
}

// Iterative radix-2 Cooley-Tukey, in place. Input size must be a power of
// two; stft checks that before calling.
void fft_inplace(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) {
      j ^= bit;
    }
    j |= bit;
    if (i < j) {
      std::swap(a[i], a[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> w_len(std::cos(angle), std::sin(angle));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= w_len;
      }
    }
  }
}

// Reflect (mirror without repeating the edge sample) into [0, n).
int reflect_index(int i, int n) {
  if (n == 1) {
    return 0;
  }
  const int period = 2 * n - 2;
  int m = i % period;
  if (m < 0) {
    m += period;
  }
  return m < n ? m : period - m;
}

}  // namespace

Spectrogram stft(const Waveform& wave, const StftParams& params) {
  if (wave.samples.empty()) {
    throw InputError("stft: empty waveform");
  }
  if (params.window_size < 2 || params.hop < 1) {
    throw InputError("stft: window_size must be >= 2 and hop >= 1");
  }
  if (!is_power_of_two(params.window_size)) {
    throw InputError("stft: window_size must be a power of two");
  }

  const int n = static_cast<int>(wave.samples.size());
  const int window = params.window_size;
  const int hop = params.hop;
  const int n_frames = n / hop + 1;
  const int n_bins = window / 2 + 1;

  std::vector<double> hann(window);
  for (int i = 0; i < window; ++i) {
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / window);
  }

  Spectrogram spec;
  spec.window_size = window;
  spec.hop = hop;
  spec.power = Matrix(n_frames, n_bins);

  std::vector<std::complex<double>> buf(window);
  for (int t = 0; t < n_frames; ++t) {
    const int start = t * hop - window / 2;
    for (int i = 0; i < window; ++i) {
      const double s = wave.samples[reflect_index(start + i, n)];
      buf[i] = std::complex<double>(s * hann[i], 0.0);
    }
    fft_inplace(buf);
    float* row = spec.power.row(t);
    for (int k = 0; k < n_bins; ++k) {
      row[k] = static_cast<float>(std::norm(buf[k]));
    }
  }
  return spec;
}

double hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

MelFilterbank build_mel_filterbank(int window_size, int sample_rate,
                                   const MelParams& params) {
  if (window_size < 2 || sample_rate <= 0) {
    throw InputError("build_mel_filterbank: bad window size or sample rate");
  }
  if (params.n_mels < 1) {
    throw InputError("build_mel_filterbank: n_mels must be positive");
  }
  if (params.f_min < 0.0 || params.f_min >= params.f_max ||
      params.f_max > sample_rate / 2.0) {
    throw InputError("build_mel_filterbank: need 0 <= f_min < f_max <= rate/2");
  }

  const int n_bins = window_size / 2 + 1;
  const int n_mels = params.n_mels;

  // n_mels + 2 corner frequencies, equally spaced in mel between the edges.
  const double mel_lo = hz_to_mel(params.f_min);
  const double mel_hi = hz_to_mel(params.f_max);
  std::vector<double> corners_hz(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    corners_hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  }

  MelFilterbank bank;
  bank.params = params;
  bank.weights = Matrix(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double left = corners_hz[m];
    const double center = corners_hz[m + 1];
    const double right = corners_hz[m + 2];
    float* row = bank.weights.row(m);
    bool any = false;
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / window_size;
      double w = 0.0;
      if (f > left && f < center) {
        w = (f - left) / (center - left);
      } else if (f == center) {
        w = 1.0;
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      row[k] = static_cast<float>(w);
      any = any || w > 0.0;
    }
    if (!any) {
      throw InputError("build_mel_filterbank: filter " + std::to_string(m) +
                       " covers no FFT bin; fewer mels or a wider band needed");
    }
  }
  return bank;
}

LogMelGram log_mel(const Spectrogram& spec, const MelFilterbank& bank) {
  const int n_frames = spec.power.rows();
  const int n_bins = spec.power.cols();
  if (bank.weights.cols() != n_bins) {
    throw ShapeError("log_mel: filterbank has " +
                     std::to_string(bank.weights.cols()) +
                     " bins, spectrogram has " + std::to_string(n_bins));
  }
  const int n_mels = bank.weights.rows();

  LogMelGram out(n_frames, n_mels);
  for (int t = 0; t < n_frames; ++t) {
    const float* p = spec.power.row(t);
    for (int m = 0; m < n_mels; ++m) {
      const float* w = bank.weights.row(m);
      double acc = 0.0;
      for (int k = 0; k < n_bins; ++k) {
        acc += static_cast<double>(w[k]) * p[k];
      }
      out.at(t, m) = static_cast<float>(std::log(std::max(acc, kLogFloor)));
    }
  }
  return out;
}

MfccGram mfcc(const LogMelGram& log_mel_frames, int n_coeffs) {
  const int n_mels = log_mel_frames.cols();
  if (n_coeffs < 1 || n_coeffs > n_mels) {
    throw InputError("mfcc: n_coeffs must be in [1, n_mels]");
  }
  const int n_frames = log_mel_frames.rows();

  // Orthonormal DCT-II basis, n_coeffs x n_mels.
  std::vector<double> basis(static_cast<size_t>(n_coeffs) * n_mels);
  const double norm0 = std::sqrt(1.0 / n_mels);
  const double norm = std::sqrt(2.0 / n_mels);
  for (int c = 0; c < n_coeffs; ++c) {
    for (int m = 0; m < n_mels; ++m) {
      basis[static_cast<size_t>(c) * n_mels + m] =
          (c == 0 ? norm0 : norm) * std::cos(M_PI * c * (2.0 * m + 1.0) / (2.0 * n_mels));
    }
  }

  MfccGram out(n_frames, n_coeffs);
  for (int t = 0; t < n_frames; ++t) {
    const float* row = log_mel_frames.row(t);
    for (int c = 0; c < n_coeffs; ++c) {
      const double* b = basis.data() + static_cast<size_t>(c) * n_mels;
      double acc = 0.0;
      for (int m = 0; m < n_mels; ++m) {
        acc += b[m] * row[m];
      }
      out.at(t, c) = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace ser
