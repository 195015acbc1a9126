#pragma once

#include <memory>
#include <string>

#include "serkit/audio_io.hpp"
#include "serkit/features.hpp"
#include "serkit/training.hpp"

namespace ser {

// One experiment, fully described. Parsed from flat key=value text; every
// field has a default so an empty config is a valid cnn6 run. epochs and
// schedule defaults depend on the model family (100/constant for CNNs,
// 20/warmup for transformers) and are resolved at parse time.
struct RunConfig {
  std::string model = "cnn6";
  int epochs = 100;
  int batch_size = 16;
  double lr = 1e-4;
  Schedule schedule = Schedule::kConstant;
  int warmup_steps = 4000;
  uint64_t seed = 0;
  int n_runs = 5;

  bool augment_enabled = false;
  SpecAugmentParams augment;

  MelParams mel;
  int mfcc_n_coeffs = 40;

  double train_fraction = 0.8;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;

  bool is_transformer() const { return model.rfind("transformer", 0) == 0; }
};

// Text grammar: one "key = value" per line, '#' starts a comment, blank
// lines are skipped. Unknown or repeated keys raise ConfigError, as do
// values that fail validation. See print_run_config for the key list.
RunConfig parse_run_config_text(const std::string& text);
RunConfig parse_run_config(const std::string& path);

// Canonical rendering: every key, fixed order, shortest round-trip number
// formatting. parse(print(c)) reproduces c exactly.
std::string print_run_config(const RunConfig& config);

// Model described by the config, with a 3-class head.
std::unique_ptr<Model> make_model(const RunConfig& config, Prng& rng);

TrainConfig make_train_config(const RunConfig& config);
SplitSpec make_split_spec(const RunConfig& config);

}  // namespace ser
