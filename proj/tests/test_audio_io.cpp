#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <set>
#include <vector>

#include "doctest.h"
#include "serkit/audio_io.hpp"
#include "serkit/errors.hpp"

#include "support/temp_dir.hpp"
#include "support/testdata.hpp"

using testsupport::TempDir;

namespace {

void append_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
  }
}

void append_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void append_tag(std::vector<uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

TEST_CASE("pcm16 samples are scaled by 1/32768 exactly") {
  TempDir dir;
  const std::vector<int16_t> pcm{-32768, -1, 0, 1, 16384, 32767};
  const std::string path = dir.file("a.wav");
  testsupport::write_wav_pcm16(path, pcm, 16000);

  const auto wave = ser::read_wav(path);
  CHECK(wave.sample_rate == 16000);
  REQUIRE(wave.samples.size() == pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i) {
    CHECK(wave.samples[i] == static_cast<float>(pcm[i]) / 32768.0f);
  }
}

TEST_CASE("float32 samples come back bit for bit") {
  TempDir dir;
  const std::vector<float> samples{0.0f, 0.25f, -1.0f, 1.0f, 1e-7f, -0.5f};
  const std::string path = dir.file("f.wav");
  testsupport::write_wav_float32(path, samples, 44100);

  const auto wave = ser::read_wav(path);
  CHECK(wave.sample_rate == 44100);
  CHECK(wave.samples == samples);
}

TEST_CASE("stereo is averaged to mono") {
  TempDir dir;
  // Interleaved L/R pairs.
  const std::vector<int16_t> pcm{16384, -16384, 8192, 8192, -32768, 0};
  const std::string path = dir.file("st.wav");
  testsupport::write_wav_pcm16(path, pcm, 16000, 2);

  const auto wave = ser::read_wav(path);
  REQUIRE(wave.samples.size() == 3);
  CHECK(wave.samples[0] == doctest::Approx(0.0f));
  CHECK(wave.samples[1] == doctest::Approx(0.25f));
  CHECK(wave.samples[2] == doctest::Approx(-0.5f));
}

TEST_CASE("unsupported and malformed wav files raise the right errors") {
  TempDir dir;

  SUBCASE("three channels") {
    const std::vector<int16_t> pcm{0, 0, 0, 1, 1, 1};
    const std::string path = dir.file("three.wav");
    testsupport::write_wav_pcm16(path, pcm, 16000, 3);
    CHECK_THROWS_AS(ser::read_wav(path), ser::UnsupportedError);
  }

  SUBCASE("not a riff file") {
    const std::string path = dir.file("noise.wav");
    testsupport::write_bytes(path, {'h', 'e', 'l', 'l', 'o', '!', '!', '!',
                                    '1', '2', '3', '4', '5', '6'});
    CHECK_THROWS_AS(ser::read_wav(path), ser::FormatError);
  }

  SUBCASE("data chunk shorter than declared") {
    std::vector<uint8_t> bytes;
    append_tag(bytes, "RIFF");
    append_u32(bytes, 36 + 64);
    append_tag(bytes, "WAVE");
    append_tag(bytes, "fmt ");
    append_u32(bytes, 16);
    append_u16(bytes, 1);
    append_u16(bytes, 1);
    append_u32(bytes, 16000);
    append_u32(bytes, 32000);
    append_u16(bytes, 2);
    append_u16(bytes, 16);
    append_tag(bytes, "data");
    append_u32(bytes, 64);  // declares 64 bytes but provides 4
    append_u32(bytes, 0);
    const std::string path = dir.file("short.wav");
    testsupport::write_bytes(path, bytes);
    CHECK_THROWS_AS(ser::read_wav(path), ser::FormatError);
  }

  SUBCASE("missing file") {
    CHECK_THROWS_AS(ser::read_wav(dir.file("nope.wav")), ser::IoError);
  }
}

TEST_CASE("chunks with odd sizes are padded to even offsets") {
  // A LIST chunk of 3 bytes must be followed by one pad byte before the next
  // chunk header, per RIFF.
  std::vector<uint8_t> bytes;
  append_tag(bytes, "RIFF");
  append_u32(bytes, 4 + 8 + 4 + 8 + 16 + 8 + 4);
  append_tag(bytes, "WAVE");
  append_tag(bytes, "LIST");
  append_u32(bytes, 3);
  bytes.push_back('x');
  bytes.push_back('y');
  bytes.push_back('z');
  bytes.push_back(0);  // pad
  append_tag(bytes, "fmt ");
  append_u32(bytes, 16);
  append_u16(bytes, 1);
  append_u16(bytes, 1);
  append_u32(bytes, 8000);
  append_u32(bytes, 16000);
  append_u16(bytes, 2);
  append_u16(bytes, 16);
  append_tag(bytes, "data");
  append_u32(bytes, 4);
  append_u16(bytes, static_cast<uint16_t>(int16_t{4096}));
  append_u16(bytes, static_cast<uint16_t>(int16_t{-4096}));

  TempDir dir;
  const std::string path = dir.file("odd.wav");
  testsupport::write_bytes(path, bytes);
  const auto wave = ser::read_wav(path);
  REQUIRE(wave.samples.size() == 2);
  CHECK(wave.samples[0] == doctest::Approx(0.125f));
  CHECK(wave.samples[1] == doctest::Approx(-0.125f));
}

TEST_CASE("resampling at the same rate is the identity") {
  ser::Waveform wave;
  wave.sample_rate = 16000;
  for (int i = 0; i < 100; ++i) {
    wave.samples.push_back(std::sin(0.1f * static_cast<float>(i)));
  }
  const auto out = ser::resample(wave, 16000);
  CHECK(out.sample_rate == 16000);
  CHECK(out.samples == wave.samples);
}

TEST_CASE("output length is round(n * ratio)") {
  ser::Waveform wave;
  wave.sample_rate = 16000;
  wave.samples.assign(1000, 0.0f);
  CHECK(ser::resample(wave, 32000).samples.size() == 2000);
  // 1000 * 22050 / 16000 = 1378.125, rounds to 1378.
  CHECK(ser::resample(wave, 22050).samples.size() == 1378);
  CHECK(ser::resample(wave, 8000).samples.size() == 500);
}

TEST_CASE("upsampling an impulse exposes the symmetric interpolation kernel") {
  ser::Waveform wave;
  wave.sample_rate = 16000;
  wave.samples.assign(201, 0.0f);
  wave.samples[100] = 1.0f;

  const auto out = ser::resample(wave, 32000);
  REQUIRE(out.samples.size() == 402);
  // Output index 200 sits exactly on the impulse: kernel center, value 1.
  CHECK(out.samples[200] == doctest::Approx(1.0f).epsilon(1e-6));
  // Whole-sample offsets hit the sinc zero crossings.
  CHECK(std::abs(out.samples[198]) < 1e-6f);
  CHECK(std::abs(out.samples[202]) < 1e-6f);
  // Half-sample offsets are symmetric around the center.
  CHECK(out.samples[199] == doctest::Approx(out.samples[201]).epsilon(1e-6));
  CHECK(out.samples[197] == doctest::Approx(out.samples[203]).epsilon(1e-6));
}

TEST_CASE("a sine survives resampling in both directions") {
  constexpr double kFreq = 440.0;

  SUBCASE("16 kHz up to 32 kHz") {
    ser::Waveform wave;
    wave.sample_rate = 16000;
    for (int i = 0; i < 1600; ++i) {
      wave.samples.push_back(static_cast<float>(
          std::sin(2.0 * std::numbers::pi * kFreq * i / 16000.0)));
    }
    const auto out = ser::resample(wave, 32000);
    double worst = 0.0;
    for (size_t j = 400; j < out.samples.size() - 400; ++j) {
      const double expected =
          std::sin(2.0 * std::numbers::pi * kFreq * static_cast<double>(j) / 32000.0);
      worst = std::max(worst, std::abs(out.samples[j] - expected));
    }
    CHECK(worst < 2e-3);
  }

  SUBCASE("32 kHz down to 16 kHz") {
    ser::Waveform wave;
    wave.sample_rate = 32000;
    for (int i = 0; i < 3200; ++i) {
      wave.samples.push_back(static_cast<float>(
          std::sin(2.0 * std::numbers::pi * kFreq * i / 32000.0)));
    }
    const auto out = ser::resample(wave, 16000);
    double worst = 0.0;
    for (size_t j = 400; j < out.samples.size() - 400; ++j) {
      const double expected =
          std::sin(2.0 * std::numbers::pi * kFreq * static_cast<double>(j) / 16000.0);
      worst = std::max(worst, std::abs(out.samples[j] - expected));
    }
    CHECK(worst < 5e-3);
  }
}

TEST_CASE("manifest files round-trip and validate") {
  TempDir dir;

  SUBCASE("write and read back") {
    ser::Manifest manifest;
    manifest.entries.push_back({"a.wav", ser::Label::kNeutral});
    manifest.entries.push_back({"b.wav", ser::Label::kNonNeutralMale});
    manifest.entries.push_back({"c.wav", ser::Label::kNonNeutralFemale});
    const std::string path = dir.file("m.csv");
    ser::write_manifest(manifest, path);
    const auto loaded = ser::read_manifest(path);
    REQUIRE(loaded.entries.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
      CHECK(loaded.entries[i].path == manifest.entries[i].path);
      CHECK(loaded.entries[i].label == manifest.entries[i].label);
    }
  }

  SUBCASE("paths may contain commas; the label follows the last one") {
    const std::string path = dir.file("commas.csv");
    std::ofstream(path) << "path,label\ndir,with,commas/x.wav,neutral\n";
    const auto loaded = ser::read_manifest(path);
    REQUIRE(loaded.entries.size() == 1);
    CHECK(loaded.entries[0].path == "dir,with,commas/x.wav");
    CHECK(loaded.entries[0].label == ser::Label::kNeutral);
  }

  SUBCASE("crlf endings and blank lines are tolerated") {
    const std::string path = dir.file("crlf.csv");
    std::ofstream(path) << "path,label\r\na.wav,neutral\r\n\r\nb.wav,non_neutral_male\r\n";
    const auto loaded = ser::read_manifest(path);
    REQUIRE(loaded.entries.size() == 2);
    CHECK(loaded.entries[1].label == ser::Label::kNonNeutralMale);
  }

  SUBCASE("a wrong header is a format error") {
    const std::string path = dir.file("hdr.csv");
    std::ofstream(path) << "file,class\na.wav,neutral\n";
    CHECK_THROWS_AS(ser::read_manifest(path), ser::FormatError);
  }

  SUBCASE("an unknown label is a label error") {
    const std::string path = dir.file("lbl.csv");
    std::ofstream(path) << "path,label\na.wav,angry\n";
    CHECK_THROWS_AS(ser::read_manifest(path), ser::LabelError);
  }

  SUBCASE("a missing file is an io error") {
    CHECK_THROWS_AS(ser::read_manifest(dir.file("missing.csv")), ser::IoError);
  }
}

namespace {

ser::Manifest balanced_manifest(int n0, int n1, int n2) {
  ser::Manifest manifest;
  const int counts[3] = {n0, n1, n2};
  for (int label = 0; label < 3; ++label) {
    for (int i = 0; i < counts[label]; ++i) {
      manifest.entries.push_back(
          {"c" + std::to_string(label) + "_" + std::to_string(i) + ".wav",
           static_cast<ser::Label>(label)});
    }
  }
  return manifest;
}

std::array<int, 3> label_counts(const ser::Manifest& manifest) {
  std::array<int, 3> counts{};
  for (const auto& entry : manifest.entries) {
    ++counts[static_cast<size_t>(entry.label)];
  }
  return counts;
}

}  // namespace

TEST_CASE("stratified split honors the per-class floor/round/remainder rule") {
  // 210 + 210 + 205 = 625 entries at 0.8/0.1/0.1:
  //   210: floor(168.0) = 168 train, round(21.0) = 21 valid, 21 test
  //   205: floor(164.0) = 164 train, round(20.5) = 21 valid, 20 test
  const auto manifest = balanced_manifest(210, 210, 205);
  const auto split = ser::stratified_split(manifest, {0.8, 0.1, 0.1, 0});

  CHECK(split.train.entries.size() == 500);
  CHECK(split.valid.entries.size() == 63);
  CHECK(split.test.entries.size() == 62);

  CHECK(label_counts(split.train) == std::array<int, 3>{168, 168, 164});
  CHECK(label_counts(split.valid) == std::array<int, 3>{21, 21, 21});
  CHECK(label_counts(split.test) == std::array<int, 3>{21, 21, 20});

  // Nothing lost, nothing duplicated.
  std::set<std::string> seen;
  for (const auto* part : {&split.train, &split.valid, &split.test}) {
    for (const auto& entry : part->entries) {
      CHECK(seen.insert(entry.path).second);
    }
  }
  CHECK(seen.size() == 625);
}

TEST_CASE("an empty valid cut steals one entry from test") {
  // Three entries per class: train floor(2.4) = 2, valid round(0.3) = 0,
  // test 1; the guard then moves the test entry over to valid.
  const auto manifest = balanced_manifest(3, 3, 3);
  const auto split = ser::stratified_split(manifest, {0.8, 0.1, 0.1, 1});
  CHECK(label_counts(split.train) == std::array<int, 3>{2, 2, 2});
  CHECK(label_counts(split.valid) == std::array<int, 3>{1, 1, 1});
  CHECK(label_counts(split.test) == std::array<int, 3>{0, 0, 0});
}

TEST_CASE("splits are deterministic in the seed") {
  const auto manifest = balanced_manifest(20, 20, 20);
  const auto a = ser::stratified_split(manifest, {0.8, 0.1, 0.1, 7});
  const auto b = ser::stratified_split(manifest, {0.8, 0.1, 0.1, 7});
  REQUIRE(a.train.entries.size() == b.train.entries.size());
  for (size_t i = 0; i < a.train.entries.size(); ++i) {
    CHECK(a.train.entries[i].path == b.train.entries[i].path);
  }

  auto paths = [](const ser::Manifest& m) {
    std::vector<std::string> out;
    for (const auto& entry : m.entries) {
      out.push_back(entry.path);
    }
    return out;
  };
  const auto c = ser::stratified_split(manifest, {0.8, 0.1, 0.1, 8});
  CHECK(paths(a.train) != paths(c.train));
}

TEST_CASE("split preconditions") {
  SUBCASE("classes need at least three entries") {
    auto manifest = balanced_manifest(5, 5, 2);
    CHECK_THROWS_AS(ser::stratified_split(manifest, {0.8, 0.1, 0.1, 0}),
                    ser::InputError);
  }
  SUBCASE("fractions must sum to one") {
    const auto manifest = balanced_manifest(10, 10, 10);
    CHECK_THROWS_AS(ser::stratified_split(manifest, {0.8, 0.1, 0.2, 0}),
                    ser::InputError);
    CHECK_THROWS_AS(ser::stratified_split(manifest, {1.0, 0.0, 0.0, 0}),
                    ser::InputError);
  }
}
