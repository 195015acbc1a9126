#include "serkit/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "serkit/errors.hpp"

namespace ser {

namespace {

const char* const kModelNames[] = {"cnn6", "cnn10", "cnn14", "transformer128",
                                   "transformer512"};

bool valid_model(const std::string& name) {
  for (const char* m : kModelNames) {
    if (name == m) {
      return true;
    }
  }
  return false;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  size_t b = s.find_last_not_of(" \t");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

int64_t parse_int(const std::string& key, const std::string& value) {
  int64_t out = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("key '" + key + "': '" + value + "' is not an integer");
  }
  return out;
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  uint64_t out = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("key '" + key + "': '" + value +
                      "' is not a non-negative integer");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("key '" + key + "': '" + value + "' is not a number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") {
    return true;
  }
  if (value == "false") {
    return false;
  }
  throw ConfigError("key '" + key + "': expected true or false, got '" + value +
                    "'");
}

int parse_positive_int(const std::string& key, const std::string& value) {
  const int64_t v = parse_int(key, value);
  if (v < 1 || v > std::numeric_limits<int>::max()) {
    throw ConfigError("key '" + key + "': must be a positive integer");
  }
  return static_cast<int>(v);
}

int parse_nonneg_int(const std::string& key, const std::string& value) {
  const int64_t v = parse_int(key, value);
  if (v < 0 || v > std::numeric_limits<int>::max()) {
    throw ConfigError("key '" + key + "': must be a non-negative integer");
  }
  return static_cast<int>(v);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
  std::map<std::string, std::string> pairs;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": empty key or value");
    }
    if (!pairs.emplace(key, value).second) {
      throw ConfigError("key '" + key + "' appears more than once");
    }
  }

  RunConfig config;
  bool epochs_seen = false;
  bool schedule_seen = false;
  for (const auto& [key, value] : pairs) {
    if (key == "model") {
      if (!valid_model(value)) {
        throw ConfigError("key 'model': unknown model '" + value + "'");
      }
      config.model = value;
    } else if (key == "epochs") {
      config.epochs = parse_positive_int(key, value);
      epochs_seen = true;
    } else if (key == "batch_size") {
      config.batch_size = parse_positive_int(key, value);
    } else if (key == "lr") {
      config.lr = parse_double(key, value);
      if (!(config.lr > 0.0) || !std::isfinite(config.lr)) {
        throw ConfigError("key 'lr': must be a positive number");
      }
    } else if (key == "schedule") {
      if (value == "constant") {
        config.schedule = Schedule::kConstant;
      } else if (value == "warmup") {
        config.schedule = Schedule::kWarmup;
      } else {
        throw ConfigError("key 'schedule': expected constant or warmup");
      }
      schedule_seen = true;
    } else if (key == "warmup_steps") {
      config.warmup_steps = parse_positive_int(key, value);
    } else if (key == "seed") {
      config.seed = parse_u64(key, value);
    } else if (key == "n_runs") {
      config.n_runs = parse_positive_int(key, value);
    } else if (key == "augment.enabled") {
      config.augment_enabled = parse_bool(key, value);
    } else if (key == "augment.time_mask_max") {
      config.augment.time_mask_max = parse_nonneg_int(key, value);
    } else if (key == "augment.freq_mask_max") {
      config.augment.freq_mask_max = parse_nonneg_int(key, value);
    } else if (key == "augment.n_time_masks") {
      config.augment.n_time_masks = parse_nonneg_int(key, value);
    } else if (key == "augment.n_freq_masks") {
      config.augment.n_freq_masks = parse_nonneg_int(key, value);
    } else if (key == "mel.n_mels") {
      config.mel.n_mels = parse_positive_int(key, value);
    } else if (key == "mel.f_min") {
      config.mel.f_min = parse_double(key, value);
    } else if (key == "mel.f_max") {
      config.mel.f_max = parse_double(key, value);
    } else if (key == "mfcc.n_coeffs") {
      config.mfcc_n_coeffs = parse_positive_int(key, value);
    } else if (key == "split.train_fraction") {
      config.train_fraction = parse_double(key, value);
    } else if (key == "split.valid_fraction") {
      config.valid_fraction = parse_double(key, value);
    } else if (key == "split.test_fraction") {
      config.test_fraction = parse_double(key, value);
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }

  if (!epochs_seen) {
    config.epochs = config.is_transformer() ? 20 : 100;
  }
  if (!schedule_seen) {
    config.schedule =
        config.is_transformer() ? Schedule::kWarmup : Schedule::kConstant;
  }

  if (config.mel.f_min < 0.0 || config.mel.f_min >= config.mel.f_max) {
    throw ConfigError("mel band: need 0 <= f_min < f_max");
  }
  if (config.mfcc_n_coeffs > config.mel.n_mels) {
    throw ConfigError("mfcc.n_coeffs cannot exceed mel.n_mels");
  }
  if (config.train_fraction <= 0.0 || config.valid_fraction <= 0.0 ||
      config.test_fraction <= 0.0) {
    throw ConfigError("split fractions must be positive");
  }
  if (std::abs(config.train_fraction + config.valid_fraction +
               config.test_fraction - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  return config;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config: " + path);
  }
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config_text(text.str());
}

std::string print_run_config(const RunConfig& config) {
  std::ostringstream out;
  out << "model = " << config.model << '\n';
  out << "epochs = " << config.epochs << '\n';
  out << "batch_size = " << config.batch_size << '\n';
  out << "lr = " << format_double(config.lr) << '\n';
  out << "schedule = "
      << (config.schedule == Schedule::kWarmup ? "warmup" : "constant") << '\n';
  out << "warmup_steps = " << config.warmup_steps << '\n';
  out << "seed = " << config.seed << '\n';
  out << "n_runs = " << config.n_runs << '\n';
  out << "augment.enabled = " << (config.augment_enabled ? "true" : "false")
      << '\n';
  out << "augment.time_mask_max = " << config.augment.time_mask_max << '\n';
  out << "augment.freq_mask_max = " << config.augment.freq_mask_max << '\n';
  out << "augment.n_time_masks = " << config.augment.n_time_masks << '\n';
  out << "augment.n_freq_masks = " << config.augment.n_freq_masks << '\n';
  out << "mel.n_mels = " << config.mel.n_mels << '\n';
  out << "mel.f_min = " << format_double(config.mel.f_min) << '\n';
  out << "mel.f_max = " << format_double(config.mel.f_max) << '\n';
  out << "mfcc.n_coeffs = " << config.mfcc_n_coeffs << '\n';
  out << "split.train_fraction = " << format_double(config.train_fraction)
      << '\n';
  out << "split.valid_fraction = " << format_double(config.valid_fraction)
      << '\n';
  out << "split.test_fraction = " << format_double(config.test_fraction)
      << '\n';
  return out.str();
}

std::unique_ptr<Model> make_model(const RunConfig& config, Prng& rng) {
  if (config.model == "cnn6" || config.model == "cnn10" ||
      config.model == "cnn14") {
    CnnSpec spec;
    spec.variant = config.model == "cnn6"    ? CnnVariant::kCnn6
                   : config.model == "cnn10" ? CnnVariant::kCnn10
                                             : CnnVariant::kCnn14;
    spec.head_units = kNumClasses;
    return build_cnn(spec, rng);
  }
  TransformerSpec spec;
  spec.input_dim = config.mfcc_n_coeffs;
  spec.head_units = kNumClasses;
  if (config.model == "transformer128") {
    spec.d = 128;
    spec.n_heads = 4;
  } else if (config.model == "transformer512") {
    spec.d = 512;
    spec.n_heads = 8;
  } else {
    throw ConfigError("unknown model '" + config.model + "'");
  }
  return build_transformer(spec, rng);
}

TrainConfig make_train_config(const RunConfig& config) {
  TrainConfig train;
  train.epochs = config.epochs;
  train.batch_size = config.batch_size;
  train.base_lr = config.lr;
  train.schedule = config.schedule;
  train.warmup_steps = config.warmup_steps;
  train.seed = config.seed;
  if (config.augment_enabled) {
    train.augment = config.augment;
  }
  return train;
}

SplitSpec make_split_spec(const RunConfig& config) {
  SplitSpec spec;
  spec.train_fraction = config.train_fraction;
  spec.valid_fraction = config.valid_fraction;
  spec.test_fraction = config.test_fraction;
  spec.seed = config.seed;
  return spec;
}

}  // namespace ser
