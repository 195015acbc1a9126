// Python face of the library: the feature pipeline, mask sampling, metrics
// and the split, working on numpy arrays. Training stays on the C++ side;
// these bindings exist for inspection and downstream analysis.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "serkit/audio_io.hpp"
#include "serkit/augment.hpp"
#include "serkit/errors.hpp"
#include "serkit/features.hpp"
#include "serkit/label.hpp"
#include "serkit/matrix.hpp"
#include "serkit/metrics.hpp"
#include "serkit/prng.hpp"
#include "serkit/training.hpp"

namespace py = pybind11;

namespace {

py::array_t<float> matrix_to_array(const ser::Matrix& m) {
  py::array_t<float> out({m.rows(), m.cols()});
  std::memcpy(out.mutable_data(), m.data().data(),
              m.data().size() * sizeof(float));
  return out;
}

ser::Matrix array_to_matrix(const py::array_t<float, py::array::c_style |
                                                         py::array::forcecast>& a,
                            const char* what) {
  if (a.ndim() != 2) {
    throw ser::InputError(std::string(what) + ": expected a 2-D array");
  }
  ser::Matrix m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::memcpy(m.data().data(), a.data(), m.data().size() * sizeof(float));
  return m;
}

std::vector<float> array_to_samples(
    const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 1) {
    throw ser::InputError("samples: expected a 1-D array");
  }
  return {a.data(), a.data() + a.shape(0)};
}

ser::Label label_from_int(int value) {
  if (value < 0 || value >= ser::kNumClasses) {
    throw ser::LabelError("label index " + std::to_string(value) +
                          " outside [0, " + std::to_string(ser::kNumClasses) +
                          ")");
  }
  return static_cast<ser::Label>(value);
}

ser::MelParams mel_params(int n_mels, double f_min, double f_max) {
  ser::MelParams params;
  params.n_mels = n_mels;
  params.f_min = f_min;
  params.f_max = f_max;
  return params;
}

py::list manifest_to_list(const ser::Manifest& manifest) {
  py::list out;
  for (const auto& entry : manifest.entries) {
    out.append(py::make_tuple(entry.path, static_cast<int>(entry.label)));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "speech emotion recognition toolkit core";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) {
        std::rethrow_exception(p);
      }
    } catch (const ser::IoError& e) {
      PyErr_SetString(PyExc_OSError, e.what());
    } catch (const ser::NumericError& e) {
      PyErr_SetString(PyExc_ArithmeticError, e.what());
    } catch (const ser::Error& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.attr("LABEL_NAMES") = py::cast(std::vector<std::string>(
      ser::kLabelNames.begin(), ser::kLabelNames.end()));

  m.def(
      "read_wav",
      [](const std::string& path) {
        const ser::Waveform wave = ser::read_wav(path);
        py::array_t<float> samples(static_cast<py::ssize_t>(wave.samples.size()));
        std::memcpy(samples.mutable_data(), wave.samples.data(),
                    wave.samples.size() * sizeof(float));
        return py::make_tuple(std::move(samples), wave.sample_rate);
      },
      py::arg("path"),
      "Read a PCM16 or float32 RIFF file; returns (samples, sample_rate).");

  m.def(
      "resample",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             samples,
         int sample_rate, int target_rate) {
        const ser::Waveform out =
            ser::resample({array_to_samples(samples), sample_rate}, target_rate);
        py::array_t<float> result(static_cast<py::ssize_t>(out.samples.size()));
        std::memcpy(result.mutable_data(), out.samples.data(),
                    out.samples.size() * sizeof(float));
        return result;
      },
      py::arg("samples"), py::arg("sample_rate"), py::arg("target_rate"),
      "Windowed-sinc resampling; equal rates return the input unchanged.");

  m.def(
      "stft_power",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             samples,
         int sample_rate, int window_size, int hop) {
        ser::StftParams params;
        params.window_size = window_size;
        params.hop = hop;
        return matrix_to_array(
            ser::stft({array_to_samples(samples), sample_rate}, params).power);
      },
      py::arg("samples"), py::arg("sample_rate"), py::arg("window_size") = 1024,
      py::arg("hop") = 320,
      "Power spectrogram, frames x (window_size / 2 + 1).");

  m.def(
      "mel_filterbank",
      [](int window_size, int sample_rate, int n_mels, double f_min,
         double f_max) {
        return matrix_to_array(
            ser::build_mel_filterbank(window_size, sample_rate,
                                      mel_params(n_mels, f_min, f_max))
                .weights);
      },
      py::arg("window_size"), py::arg("sample_rate"), py::arg("n_mels") = 64,
      py::arg("f_min") = 50.0, py::arg("f_max") = 14000.0,
      "Triangular HTK-mel filters, n_mels x (window_size / 2 + 1).");

  m.def(
      "log_mel_gram",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             samples,
         int sample_rate, int window_size, int hop, int n_mels, double f_min,
         double f_max) {
        ser::StftParams stft_params;
        stft_params.window_size = window_size;
        stft_params.hop = hop;
        const auto spec =
            ser::stft({array_to_samples(samples), sample_rate}, stft_params);
        const auto bank = ser::build_mel_filterbank(
            window_size, sample_rate, mel_params(n_mels, f_min, f_max));
        return matrix_to_array(ser::log_mel(spec, bank));
      },
      py::arg("samples"), py::arg("sample_rate"), py::arg("window_size") = 1024,
      py::arg("hop") = 320, py::arg("n_mels") = 64, py::arg("f_min") = 50.0,
      py::arg("f_max") = 14000.0,
      "stft -> mel filterbank -> natural log with a 1e-10 floor.");

  m.def(
      "mfcc_gram",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             log_mel,
         int n_coeffs) {
        return matrix_to_array(
            ser::mfcc(array_to_matrix(log_mel, "mfcc_gram"), n_coeffs));
      },
      py::arg("log_mel"), py::arg("n_coeffs") = 40,
      "Orthonormal DCT-II of each log-mel frame.");

  m.def("hz_to_mel", &ser::hz_to_mel, py::arg("hz"));
  m.def("mel_to_hz", &ser::mel_to_hz, py::arg("mel"));

  m.def(
      "sample_masks",
      [](int n_frames, int n_bins, uint64_t seed, int time_mask_max,
         int freq_mask_max, int n_time_masks, int n_freq_masks) {
        ser::SpecAugmentParams params;
        params.time_mask_max = time_mask_max;
        params.freq_mask_max = freq_mask_max;
        params.n_time_masks = n_time_masks;
        params.n_freq_masks = n_freq_masks;
        ser::Prng rng(seed);
        py::list out;
        for (const auto& mask : ser::sample_masks(n_frames, n_bins, params, rng)) {
          out.append(py::make_tuple(
              mask.axis == ser::MaskAxis::kTime ? "time" : "freq", mask.start,
              mask.length));
        }
        return out;
      },
      py::arg("n_frames"), py::arg("n_bins"), py::arg("seed"),
      py::arg("time_mask_max") = 64, py::arg("freq_mask_max") = 8,
      py::arg("n_time_masks") = 2, py::arg("n_freq_masks") = 2,
      "Draw mask geometry; returns (axis, start, length) tuples.");

  m.def(
      "apply_masks",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             gram,
         const std::vector<std::tuple<std::string, int, int>>& masks) {
        std::vector<ser::MaskSpec> specs;
        specs.reserve(masks.size());
        for (const auto& [axis, start, length] : masks) {
          if (axis != "time" && axis != "freq") {
            throw ser::InputError("mask axis must be 'time' or 'freq', got '" +
                                  axis + "'");
          }
          specs.push_back({axis == "time" ? ser::MaskAxis::kTime
                                          : ser::MaskAxis::kFreq,
                           start, length});
        }
        return matrix_to_array(
            ser::apply_masks(array_to_matrix(gram, "apply_masks"), specs));
      },
      py::arg("gram"), py::arg("masks"),
      "Zero the masked frames / bins of a copy of the gram.");

  m.def(
      "confusion",
      [](const std::vector<int>& truth, const std::vector<int>& predicted) {
        std::vector<ser::Label> t, p;
        t.reserve(truth.size());
        p.reserve(predicted.size());
        for (int v : truth) {
          t.push_back(label_from_int(v));
        }
        for (int v : predicted) {
          p.push_back(label_from_int(v));
        }
        const ser::ConfusionMatrix cm = ser::confusion_matrix(t, p);
        py::array_t<int64_t> out({ser::kNumClasses, ser::kNumClasses});
        auto view = out.mutable_unchecked<2>();
        for (int r = 0; r < ser::kNumClasses; ++r) {
          for (int c = 0; c < ser::kNumClasses; ++c) {
            view(r, c) = cm.counts[static_cast<size_t>(r)][static_cast<size_t>(c)];
          }
        }
        return out;
      },
      py::arg("truth"), py::arg("predicted"),
      "3x3 confusion matrix indexed [true, predicted].");

  m.def(
      "f1_scores",
      [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>&
             confusion) {
        if (confusion.ndim() != 2 || confusion.shape(0) != ser::kNumClasses ||
            confusion.shape(1) != ser::kNumClasses) {
          throw ser::InputError("f1_scores: expected a 3x3 confusion matrix");
        }
        ser::ConfusionMatrix cm;
        auto view = confusion.unchecked<2>();
        for (int r = 0; r < ser::kNumClasses; ++r) {
          for (int c = 0; c < ser::kNumClasses; ++c) {
            cm.counts[static_cast<size_t>(r)][static_cast<size_t>(c)] = view(r, c);
          }
        }
        const ser::F1Report report = ser::f1_from_confusion(cm);
        py::dict out;
        out["precision"] = py::cast(std::vector<double>(
            report.precision.begin(), report.precision.end()));
        out["recall"] =
            py::cast(std::vector<double>(report.recall.begin(), report.recall.end()));
        out["f1"] = py::cast(std::vector<double>(report.f1.begin(), report.f1.end()));
        out["macro_f1"] = report.macro_f1;
        return out;
      },
      py::arg("confusion"),
      "Per-class precision / recall / F1 and the macro mean.");

  m.def(
      "aggregate",
      [](const std::vector<double>& values) {
        return ser::aggregate_runs(values);
      },
      py::arg("values"), "Mean and sample standard deviation.");

  m.def("warmup_lr", &ser::warmup_lr, py::arg("step"), py::arg("model_dim"),
        py::arg("warmup_steps"),
        "1-based warmup schedule, d^-0.5 * min(s^-0.5, s * w^-1.5).");

  m.def(
      "stratified_split",
      [](const std::vector<std::pair<std::string, int>>& entries,
         double train_fraction, double valid_fraction, double test_fraction,
         uint64_t seed) {
        ser::Manifest manifest;
        manifest.entries.reserve(entries.size());
        for (const auto& [path, label] : entries) {
          manifest.entries.push_back({path, label_from_int(label)});
        }
        ser::SplitSpec spec;
        spec.train_fraction = train_fraction;
        spec.valid_fraction = valid_fraction;
        spec.test_fraction = test_fraction;
        spec.seed = seed;
        const ser::SplitResult split = ser::stratified_split(manifest, spec);
        py::dict out;
        out["train"] = manifest_to_list(split.train);
        out["valid"] = manifest_to_list(split.valid);
        out["test"] = manifest_to_list(split.test);
        return out;
      },
      py::arg("entries"), py::arg("train_fraction") = 0.8,
      py::arg("valid_fraction") = 0.1, py::arg("test_fraction") = 0.1,
      py::arg("seed") = 0,
      "Deterministic per-class split of (path, label) pairs.");
}
