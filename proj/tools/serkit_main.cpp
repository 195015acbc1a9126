// Command-line front end: wires the library into the seven subcommands and
// maps library exceptions onto stable exit codes so scripts can branch on
// failures without scraping messages.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "serkit/audio_io.hpp"
#include "serkit/augment.hpp"
#include "serkit/checkpoint.hpp"
#include "serkit/config.hpp"
#include "serkit/errors.hpp"
#include "serkit/features.hpp"
#include "serkit/metrics.hpp"
#include "serkit/models.hpp"
#include "serkit/training.hpp"

namespace {

constexpr int kTargetSampleRate = 32000;

ser::RunConfig load_config(const std::string& path) {
  if (path.empty()) {
    return ser::RunConfig{};
  }
  return ser::parse_run_config(path);
}

bool wants_mfcc(const ser::RunConfig& config) {
  return config.is_transformer();
}

// wav -> resample to 32 kHz -> stft -> log-mel (-> mfcc for transformers).
ser::Matrix compute_features(const std::string& wav_path,
                             const ser::RunConfig& config, bool mfcc_kind) {
  ser::Waveform wave = ser::read_wav(wav_path);
  wave = ser::resample(wave, kTargetSampleRate);
  const ser::Spectrogram spec = ser::stft(wave);
  const ser::MelFilterbank bank = ser::build_mel_filterbank(
      spec.window_size, kTargetSampleRate, config.mel);
  ser::LogMelGram gram = ser::log_mel(spec, bank);
  if (mfcc_kind) {
    return ser::mfcc(gram, config.mfcc_n_coeffs);
  }
  return gram;
}

ser::Matrix record_to_matrix(const ser::TensorRecord& record) {
  if (record.shape.size() != 2) {
    throw ser::FormatError("feature cache entry '" + record.name +
                           "' is not a 2-D gram");
  }
  ser::Matrix gram(record.shape[0], record.shape[1]);
  gram.data() = record.data;
  return gram;
}

// Builds the in-memory dataset for a manifest, either by running the
// feature pipeline on each wav or by pulling grams out of a cache written
// by extract-features (entries are keyed by manifest path).
ser::FeatureDataset load_dataset(const ser::Manifest& manifest,
                                 const ser::RunConfig& config,
                                 const std::string& cache_path) {
  ser::FeatureDataset data;
  if (!cache_path.empty()) {
    std::map<std::string, ser::Matrix> cache;
    for (auto& record : ser::load_checkpoint(cache_path)) {
      cache.emplace(record.name, record_to_matrix(record));
    }
    for (const auto& entry : manifest.entries) {
      const auto it = cache.find(entry.path);
      if (it == cache.end()) {
        throw ser::InputError("feature cache has no entry for '" + entry.path +
                              "'");
      }
      data.features.push_back(it->second);
      data.labels.push_back(entry.label);
    }
    return data;
  }
  const bool mfcc_kind = wants_mfcc(config);
  for (const auto& entry : manifest.entries) {
    data.features.push_back(compute_features(entry.path, config, mfcc_kind));
    data.labels.push_back(entry.label);
  }
  return data;
}

void save_model_checkpoint(ser::Model& model, const std::string& path) {
  ser::save_checkpoint(path, ser::export_state(model));
}

void load_model_checkpoint(ser::Model& model, const std::string& path) {
  ser::import_state(model, ser::load_checkpoint(path));
}

nlohmann::ordered_json confusion_to_json(const ser::ConfusionMatrix& cm) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : cm.counts) {
    rows.push_back(row);
  }
  return rows;
}

void print_eval_result(const ser::EvalResult& result) {
  nlohmann::ordered_json doc;
  doc["macro_f1"] = result.macro_f1;
  doc["per_class"] = nlohmann::ordered_json::array();
  for (int c = 0; c < ser::kNumClasses; ++c) {
    const auto uc = static_cast<size_t>(c);
    doc["per_class"].push_back({{"label", std::string(ser::kLabelNames[uc])},
                                {"precision", result.report.precision[uc]},
                                {"recall", result.report.recall[uc]},
                                {"f1", result.report.f1[uc]}});
  }
  doc["confusion"] = confusion_to_json(result.confusion);
  std::printf("%s\n", doc.dump(2).c_str());
}

void write_gram_csv(const ser::Matrix& gram, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw ser::IoError("cannot write gram csv: " + path);
  }
  for (int t = 0; t < gram.rows(); ++t) {
    const float* row = gram.row(t);
    for (int c = 0; c < gram.cols(); ++c) {
      out << (c ? "," : "");
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(row[c]));
      out << buf;
    }
    out << '\n';
  }
}

int run_prepare_split(const std::string& manifest_path,
                      const std::string& out_dir,
                      const std::string& config_path) {
  const ser::RunConfig config = load_config(config_path);
  const ser::Manifest manifest = ser::read_manifest(manifest_path);
  const ser::SplitResult split =
      ser::stratified_split(manifest, ser::make_split_spec(config));
  std::filesystem::create_directories(out_dir);
  ser::write_manifest(split.train, out_dir + "/train.csv");
  ser::write_manifest(split.valid, out_dir + "/valid.csv");
  ser::write_manifest(split.test, out_dir + "/test.csv");
  std::printf("train %zu valid %zu test %zu\n", split.train.entries.size(),
              split.valid.entries.size(), split.test.entries.size());
  return 0;
}

int run_extract_features(const std::string& manifest_path,
                         const std::string& out_path,
                         const std::string& config_path,
                         const std::string& kind) {
  const ser::RunConfig config = load_config(config_path);
  bool mfcc_kind = wants_mfcc(config);
  if (kind == "logmel") {
    mfcc_kind = false;
  } else if (kind == "mfcc") {
    mfcc_kind = true;
  } else if (!kind.empty()) {
    throw ser::ConfigError("feature kind must be logmel or mfcc");
  }
  const ser::Manifest manifest = ser::read_manifest(manifest_path);
  std::vector<ser::TensorRecord> records;
  for (const auto& entry : manifest.entries) {
    const ser::Matrix gram = compute_features(entry.path, config, mfcc_kind);
    records.push_back({entry.path,
                       {gram.rows(), gram.cols()},
                       gram.data()});
  }
  ser::save_checkpoint(out_path, records);
  std::printf("wrote %zu grams to %s\n", records.size(), out_path.c_str());
  return 0;
}

int run_train(const std::string& config_path, const std::string& train_path,
              const std::string& valid_path, const std::string& out_path,
              const std::string& log_path, const std::string& cache_path) {
  const ser::RunConfig config = load_config(config_path);
  const ser::FeatureDataset train_data =
      load_dataset(ser::read_manifest(train_path), config, cache_path);
  std::optional<ser::FeatureDataset> valid_data;
  if (!valid_path.empty()) {
    valid_data = load_dataset(ser::read_manifest(valid_path), config, cache_path);
  }

  ser::Prng rng(config.seed);
  auto model = ser::make_model(config, rng);
  const ser::TrainConfig train_config = ser::make_train_config(config);

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) {
      throw ser::IoError("cannot write epoch log: " + log_path);
    }
    log << "epoch,loss,val_f1\n";
  }
  auto on_epoch = [&log, &log_path](int epoch, double loss, double val_f1) {
    std::printf("epoch %d loss %.6f", epoch, loss);
    if (std::isfinite(val_f1)) {
      std::printf(" val_f1 %.6f", val_f1);
    }
    std::printf("\n");
    std::fflush(stdout);
    if (!log_path.empty()) {
      char buf[128];
      if (std::isfinite(val_f1)) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", epoch, loss, val_f1);
      } else {
        std::snprintf(buf, sizeof buf, "%d,%.6f,\n", epoch, loss);
      }
      log << buf;
    }
  };

  const ser::TrainOutcome outcome = ser::train_model(
      *model, train_data, valid_data ? &*valid_data : nullptr, train_config,
      rng, on_epoch);
  save_model_checkpoint(*model, out_path);
  if (outcome.used_validation) {
    std::printf("best_epoch %d val_f1 %.6f\n", outcome.best_epoch,
                outcome.best_val_f1);
  }
  std::printf("saved %s\n", out_path.c_str());
  return 0;
}

int run_evaluate(const std::string& config_path,
                 const std::string& checkpoint_path,
                 const std::string& manifest_path,
                 const std::string& cache_path) {
  const ser::RunConfig config = load_config(config_path);
  ser::Prng rng(config.seed);
  auto model = ser::make_model(config, rng);
  load_model_checkpoint(*model, checkpoint_path);
  const ser::FeatureDataset data =
      load_dataset(ser::read_manifest(manifest_path), config, cache_path);
  print_eval_result(ser::evaluate(*model, data));
  return 0;
}

int run_experiment_cmd(const std::string& config_path,
                       const std::string& manifest_path,
                       const std::string& out_path,
                       const std::string& cache_path) {
  const ser::RunConfig config = load_config(config_path);
  const ser::Manifest manifest = ser::read_manifest(manifest_path);
  const ser::SplitResult split =
      ser::stratified_split(manifest, ser::make_split_spec(config));
  const ser::FeatureDataset train_data =
      load_dataset(split.train, config, cache_path);
  const ser::FeatureDataset valid_data =
      load_dataset(split.valid, config, cache_path);
  const ser::FeatureDataset test_data =
      load_dataset(split.test, config, cache_path);

  const ser::TrainConfig train_config = ser::make_train_config(config);
  const ser::ExperimentReport report = ser::run_experiment(
      config.model,
      [&config](ser::Prng& rng) { return ser::make_model(config, rng); },
      train_config, config.n_runs, train_data, valid_data, test_data);

  nlohmann::ordered_json doc;
  doc["model"] = report.model_name;
  doc["n_runs"] = report.n_runs;
  doc["per_run"] = nlohmann::ordered_json::array();
  for (const auto& run : report.per_run) {
    nlohmann::ordered_json entry;
    entry["seed"] = run.seed;
    entry["best_epoch"] = run.best_epoch;
    entry["val_f1"] = run.val_f1;
    entry["test_f1"] = run.test_f1;
    entry["confusion"] = confusion_to_json(run.confusion);
    doc["per_run"].push_back(entry);
  }
  doc["aggregate"]["val"] = {{"mean", report.val_mean}, {"std", report.val_std}};
  doc["aggregate"]["test"] = {{"mean", report.test_mean},
                              {"std", report.test_std}};

  std::ofstream out(out_path);
  if (!out) {
    throw ser::IoError("cannot write report: " + out_path);
  }
  out << doc.dump(2) << '\n';

  std::printf("%s val %s test %s\n", report.model_name.c_str(),
              ser::format_mean_std(report.val_mean, report.val_std).c_str(),
              ser::format_mean_std(report.test_mean, report.test_std).c_str());
  return 0;
}

int run_augment_preview(const std::string& wav_path,
                        const std::string& config_path, uint64_t seed,
                        const std::string& out_path) {
  const ser::RunConfig config = load_config(config_path);
  const ser::Matrix gram =
      compute_features(wav_path, config, wants_mfcc(config));
  ser::Prng rng(seed);
  const auto masks =
      ser::sample_masks(gram.rows(), gram.cols(), config.augment, rng);
  const ser::Matrix masked = ser::apply_masks(gram, masks);

  std::printf("gram %dx%d\n", gram.rows(), gram.cols());
  for (const auto& mask : masks) {
    std::printf("mask %s start=%d length=%d\n",
                mask.axis == ser::MaskAxis::kTime ? "time" : "freq", mask.start,
                mask.length);
  }
  if (!out_path.empty()) {
    write_gram_csv(gram, out_path + ".before.csv");
    write_gram_csv(masked, out_path + ".after.csv");
    std::printf("wrote %s.before.csv %s.after.csv\n", out_path.c_str(),
                out_path.c_str());
  }
  return 0;
}

int run_inspect_checkpoint(const std::string& path) {
  const auto records = ser::load_checkpoint(path);
  std::printf("version 1\n");
  std::printf("tensors %zu\n", records.size());
  size_t total = 0;
  for (const auto& record : records) {
    std::string dims;
    for (size_t i = 0; i < record.shape.size(); ++i) {
      dims += (i ? "," : "") + std::to_string(record.shape[i]);
    }
    std::printf("%s [%s]\n", record.name.c_str(), dims.c_str());
    total += record.data.size();
  }
  std::printf("total_values %zu\n", total);
  return 0;
}

int classify_error(const std::exception& e) {
  const char* kind = "internal";
  int code = 1;
  if (dynamic_cast<const ser::IoError*>(&e)) {
    kind = "io";
    code = 3;
  } else if (dynamic_cast<const ser::ConfigError*>(&e)) {
    kind = "config";
    code = 4;
  } else if (dynamic_cast<const ser::LabelError*>(&e)) {
    kind = "label";
    code = 5;
  } else if (dynamic_cast<const ser::UnsupportedError*>(&e)) {
    kind = "unsupported";
    code = 6;
  } else if (dynamic_cast<const ser::FormatError*>(&e)) {
    kind = "format";
    code = 6;
  } else if (dynamic_cast<const ser::IntegrityError*>(&e)) {
    kind = "integrity";
    code = 7;
  } else if (dynamic_cast<const ser::VersionError*>(&e)) {
    kind = "version";
    code = 7;
  } else if (dynamic_cast<const ser::ShapeError*>(&e)) {
    kind = "shape";
  } else if (dynamic_cast<const ser::NumericError*>(&e)) {
    kind = "numeric";
  } else if (dynamic_cast<const ser::InputError*>(&e)) {
    kind = "input";
  }
  std::fprintf(stderr, "error: %s: %s\n", kind, e.what());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "speech emotion recognition toolkit\n"
      "exit codes: 0 ok, 1 internal error, 2 usage, 3 missing/unreadable "
      "file,\n"
      "4 bad config, 5 bad label, 6 bad file format, 7 integrity/version "
      "failure"};
  app.require_subcommand(1);

  std::string manifest_path, out_dir, config_path;
  auto* split_cmd = app.add_subcommand(
      "prepare-split", "split a manifest into train/valid/test manifests");
  split_cmd->add_option("--manifest", manifest_path, "input manifest csv")
      ->required();
  split_cmd->add_option("--out-dir", out_dir, "directory for the three csvs")
      ->required();
  split_cmd->add_option("--config", config_path,
                        "run config (fractions and seed)");

  std::string feat_manifest, feat_out, feat_config, feat_kind;
  auto* feat_cmd = app.add_subcommand(
      "extract-features", "run the feature pipeline over a manifest");
  feat_cmd->add_option("--manifest", feat_manifest, "input manifest csv")
      ->required();
  feat_cmd->add_option("--out", feat_out, "feature cache to write")->required();
  feat_cmd->add_option("--config", feat_config, "run config");
  feat_cmd->add_option("--kind", feat_kind,
                       "logmel or mfcc (default follows the config model)");

  std::string train_config, train_train, train_valid, train_out, train_log,
      train_cache;
  auto* train_cmd =
      app.add_subcommand("train", "train one model and save a checkpoint");
  train_cmd->add_option("--config", train_config, "run config")->required();
  train_cmd->add_option("--train-manifest", train_train, "training manifest")
      ->required();
  train_cmd->add_option("--valid-manifest", train_valid,
                        "validation manifest for best-epoch selection");
  train_cmd->add_option("--out", train_out, "checkpoint to write")->required();
  train_cmd->add_option("--log", train_log, "epoch csv (epoch,loss,val_f1)");
  train_cmd->add_option("--features", train_cache,
                        "feature cache from extract-features");

  std::string eval_config, eval_ckpt, eval_manifest, eval_cache;
  auto* eval_cmd = app.add_subcommand(
      "evaluate", "score a checkpoint on a manifest and print F1/confusion");
  eval_cmd->add_option("--config", eval_config, "run config")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")
      ->required();
  eval_cmd->add_option("--manifest", eval_manifest, "evaluation manifest")
      ->required();
  eval_cmd->add_option("--features", eval_cache, "feature cache");

  std::string exp_config, exp_manifest, exp_out, exp_cache;
  auto* exp_cmd = app.add_subcommand(
      "experiment",
      "split internally, train n_runs models, write the aggregate report");
  exp_cmd->add_option("--config", exp_config, "run config")->required();
  exp_cmd->add_option("--manifest", exp_manifest, "full corpus manifest")
      ->required();
  exp_cmd->add_option("--out", exp_out, "report json to write")->required();
  exp_cmd->add_option("--features", exp_cache, "feature cache");

  std::string prev_wav, prev_config, prev_out;
  uint64_t prev_seed = 0;
  auto* prev_cmd = app.add_subcommand(
      "augment-preview", "show SpecAugment masks for one file's features");
  prev_cmd->add_option("--wav", prev_wav, "input wav")->required();
  prev_cmd->add_option("--config", prev_config, "run config");
  prev_cmd->add_option("--seed", prev_seed, "mask sampling seed");
  prev_cmd->add_option("--out", prev_out,
                       "container with 'original' and 'masked' grams");

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand(
      "inspect-checkpoint", "verify a checkpoint and list its tensors");
  inspect_cmd->add_option("--checkpoint", inspect_path, "file to inspect")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*split_cmd) {
      return run_prepare_split(manifest_path, out_dir, config_path);
    }
    if (*feat_cmd) {
      return run_extract_features(feat_manifest, feat_out, feat_config,
                                  feat_kind);
    }
    if (*train_cmd) {
      return run_train(train_config, train_train, train_valid, train_out,
                       train_log, train_cache);
    }
    if (*eval_cmd) {
      return run_evaluate(eval_config, eval_ckpt, eval_manifest, eval_cache);
    }
    if (*exp_cmd) {
      return run_experiment_cmd(exp_config, exp_manifest, exp_out, exp_cache);
    }
    if (*prev_cmd) {
      return run_augment_preview(prev_wav, prev_config, prev_seed, prev_out);
    }
    if (*inspect_cmd) {
      return run_inspect_checkpoint(inspect_path);
    }
  } catch (const std::exception& e) {
    return classify_error(e);
  }
  return 0;
}
