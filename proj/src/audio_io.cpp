#include "serkit/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "serkit/errors.hpp"
#include "serkit/prng.hpp"

namespace ser {

namespace {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open file: " + path);
  }
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw IoError("read failed: " + path);
  }
  return bytes;
}

uint32_t read_u32le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

uint16_t read_u16le(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | p[1] << 8);
}

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatIeeeFloat = 3;

}  // namespace

Waveform read_wav(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file: " + path);
  }

  uint16_t format = 0;
  uint16_t channels = 0;
  uint32_t sample_rate = 0;
  uint16_t bits_per_sample = 0;
  bool have_fmt = false;
  const uint8_t* data_ptr = nullptr;
  size_t data_size = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint8_t* chunk_id = bytes.data() + pos;
    const uint32_t chunk_size = read_u32le(bytes.data() + pos + 4);
    pos += 8;
    if (pos + chunk_size > bytes.size()) {
      throw FormatError("truncated chunk in wav file: " + path);
    }
    if (std::memcmp(chunk_id, "fmt ", 4) == 0) {
      if (chunk_size < 16) {
        throw FormatError("fmt chunk too small: " + path);
      }
      const uint8_t* f = bytes.data() + pos;
      format = read_u16le(f);
      channels = read_u16le(f + 2);
      sample_rate = read_u32le(f + 4);
      bits_per_sample = read_u16le(f + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk_id, "data", 4) == 0) {
      data_ptr = bytes.data() + pos;
      data_size = chunk_size;
    }
    // Chunks are padded to even lengths in RIFF.
    pos += chunk_size + (chunk_size & 1);
  }

  if (!have_fmt || data_ptr == nullptr) {
    throw FormatError("wav file missing fmt or data chunk: " + path);
  }
  if (channels == 0 || sample_rate == 0) {
    throw FormatError("wav file with zero channels or zero rate: " + path);
  }
  if (channels > 2) {
    throw UnsupportedError("wav has " + std::to_string(channels) +
                           " channels, only mono and stereo are handled: " + path);
  }

  const size_t bytes_per_sample = bits_per_sample / 8;
  if (format == kFormatPcm) {
    if (bits_per_sample != 16) {
      throw UnsupportedError("PCM wav with " + std::to_string(bits_per_sample) +
                             " bits per sample, only 16 is handled: " + path);
    }
  } else if (format == kFormatIeeeFloat) {
    if (bits_per_sample != 32) {
      throw UnsupportedError("float wav with " + std::to_string(bits_per_sample) +
                             " bits per sample, only 32 is handled: " + path);
    }
  } else {
    throw UnsupportedError("wav format tag " + std::to_string(format) +
                           " is not handled: " + path);
  }

  const size_t frame_bytes = bytes_per_sample * channels;
  if (frame_bytes == 0 || data_size % frame_bytes != 0) {
    throw FormatError("data chunk size is not a whole number of frames: " + path);
  }
  const size_t n_frames = data_size / frame_bytes;

  Waveform wave;
  wave.sample_rate = static_cast<int>(sample_rate);
  wave.samples.resize(n_frames);
  for (size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (uint16_t c = 0; c < channels; ++c) {
      const uint8_t* s = data_ptr + (i * channels + c) * bytes_per_sample;
      if (format == kFormatPcm) {
        const int16_t v = static_cast<int16_t>(read_u16le(s));
        acc += static_cast<double>(v) / 32768.0;
      } else {
        float v;
        std::memcpy(&v, s, sizeof v);
        acc += static_cast<double>(v);
      }
    }
    wave.samples[i] = static_cast<float>(acc / channels);
  }
  return wave;
}

namespace {

// Zeroth-order modified Bessel function, power series. Converges quickly for
// the argument range a Kaiser window uses.
double bessel_i0(double x) {
  const double half = x / 2.0;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < sum * 1e-14) {
      break;
    }
  }
  return sum;
}

constexpr double kKaiserBeta = 8.6;
constexpr int kZeroCrossings = 64;

double sinc_pi(double x) {
  if (std::abs(x) < 1e-12) {
    return 1.0;
  }
  const double px = M_PI * x;
  return std::sin(px) / px;
}

}  // namespace

Waveform resample(const Waveform& input, int target_rate) {
  if (input.sample_rate <= 0 || target_rate <= 0) {
    throw InputError("resample: rates must be positive");
  }
  if (target_rate == input.sample_rate) {
    return input;
  }

  const double ratio = static_cast<double>(target_rate) / input.sample_rate;
  // When downsampling the kernel is stretched and its cutoff lowered so it
  // doubles as the anti-aliasing filter.
  const double scale = std::min(1.0, ratio);
  const double half_width = kZeroCrossings / scale;
  const double i0_beta = bessel_i0(kKaiserBeta);

  const int64_t n_in = static_cast<int64_t>(input.samples.size());
  const int64_t n_out = static_cast<int64_t>(std::llround(n_in * ratio));

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<size_t>(n_out));
  for (int64_t m = 0; m < n_out; ++m) {
    const double center = m / ratio;
    const int64_t j_begin =
        std::max<int64_t>(0, static_cast<int64_t>(std::ceil(center - half_width)));
    const int64_t j_end =
        std::min<int64_t>(n_in - 1, static_cast<int64_t>(std::floor(center + half_width)));
    double acc = 0.0;
    for (int64_t j = j_begin; j <= j_end; ++j) {
      const double u = j - center;
      const double w = u / half_width;
      const double window = bessel_i0(kKaiserBeta * std::sqrt(1.0 - w * w)) / i0_beta;
      acc += input.samples[static_cast<size_t>(j)] * scale * sinc_pi(scale * u) * window;
    }
    out.samples[static_cast<size_t>(m)] = static_cast<float>(acc);
  }
  return out;
}

namespace {

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  return line;
}

}  // namespace

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open manifest: " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("manifest is empty: " + path);
  }
  if (strip_cr(line) != "path,label") {
    throw FormatError("manifest must start with 'path,label' header: " + path);
  }

  Manifest manifest;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) {
      continue;
    }
    // The label is the field after the last comma, so paths containing
    // commas survive; labels never contain one.
    const size_t comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0) {
      throw FormatError("manifest line " + std::to_string(line_no) +
                        " is not 'path,label': " + path);
    }
    ManifestEntry entry;
    entry.path = line.substr(0, comma);
    entry.label = label_from_name(line.substr(comma + 1));
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

void write_manifest(const Manifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write manifest: " + path);
  }
  out << "path,label\n";
  for (const auto& entry : manifest.entries) {
    out << entry.path << ',' << label_name(entry.label) << '\n';
  }
  if (!out) {
    throw IoError("write failed: " + path);
  }
}

SplitResult stratified_split(const Manifest& manifest, const SplitSpec& spec) {
  if (spec.train_fraction <= 0.0 || spec.valid_fraction <= 0.0 ||
      spec.test_fraction <= 0.0) {
    throw InputError("stratified_split: fractions must be positive");
  }
  const double total = spec.train_fraction + spec.valid_fraction + spec.test_fraction;
  if (std::abs(total - 1.0) > 1e-9) {
    throw InputError("stratified_split: fractions must sum to 1");
  }

  std::vector<std::vector<ManifestEntry>> groups(kNumClasses);
  for (const auto& entry : manifest.entries) {
    groups[static_cast<int>(entry.label)].push_back(entry);
  }

  Prng rng(spec.seed);
  SplitResult result;
  for (int c = 0; c < kNumClasses; ++c) {
    auto& group = groups[c];
    if (group.size() < 3) {
      throw InputError("stratified_split: class '" +
                       std::string(kLabelNames[c]) + "' has " +
                       std::to_string(group.size()) +
                       " entries, need at least 3");
    }
    rng.shuffle(group);

    const size_t n = group.size();
    size_t n_train = static_cast<size_t>(std::floor(spec.train_fraction * n));
    // Round half up for the valid cut; plain floor on both cuts starves the
    // middle split of its share whenever the per-class remainders land
    // below one, and the test split would absorb all of it.
    size_t n_valid = static_cast<size_t>(std::floor(spec.valid_fraction * n + 0.5));
    if (n_train + n_valid > n) {
      n_valid = n - n_train;
    }
    size_t n_test = n - n_train - n_valid;
    if (n_valid == 0 && n_test > 0) {
      n_valid = 1;
      n_test -= 1;
    }

    auto it = group.begin();
    result.train.entries.insert(result.train.entries.end(), it, it + n_train);
    it += n_train;
    result.valid.entries.insert(result.valid.entries.end(), it, it + n_valid);
    it += n_valid;
    result.test.entries.insert(result.test.entries.end(), it, it + n_test);
  }
  return result;
}

}  // namespace ser
