#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "serkit/augment.hpp"
#include "serkit/matrix.hpp"
#include "serkit/metrics.hpp"
#include "serkit/models.hpp"
#include "serkit/prng.hpp"

namespace ser {

enum class Schedule {
  kConstant,
  kWarmup,
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double base_lr = 1e-4;
  Schedule schedule = Schedule::kConstant;
  int warmup_steps = 4000;
  uint64_t seed = 0;
  // Applied per training sample, never to validation or test data.
  std::optional<SpecAugmentParams> augment;
};

struct AdamState {
  std::vector<float> m, v;
};

// One bias-corrected Adam update for a single parameter at step t (1-based).
// A non-finite gradient value raises NumericError naming the parameter.
void adam_step(std::span<float> param, std::span<const float> grad,
               AdamState& state, int64_t t, double lr, double beta1,
               double beta2, double eps, const std::string& name);

class AdamOptimizer {
 public:
  explicit AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8);

  // Applies one update to every parameter and advances the shared step
  // counter. Parameter count and sizes must stay stable across calls.
  void step(std::vector<NamedParam>& params, double lr);

  int64_t steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<AdamState> states_;
};

// lr(step) = d^-0.5 * min(step^-0.5, step * warmup_steps^-1.5).
// step counts from 1; step < 1 raises InputError.
double warmup_lr(int64_t step, int model_dim, int64_t warmup_steps);

struct FeatureDataset {
  std::vector<Matrix> features;  // one gram per sample, frames x bins
  std::vector<Label> labels;

  size_t size() const { return features.size(); }
};

struct EpochResult {
  double mean_loss = 0.0;  // sample-weighted mean over the epoch
};

// One pass over the training set: seeded shuffle, fixed-size batches with
// the last short batch kept, optional per-sample SpecAugment, one optimizer
// step per batch. global_step counts optimizer steps across epochs and
// drives the warmup schedule.
EpochResult train_epoch(Model& model, const FeatureDataset& data,
                        const TrainConfig& cfg, AdamOptimizer& opt, Prng& rng,
                        int64_t& global_step);

struct EvalResult {
  double macro_f1 = 0.0;
  ConfusionMatrix confusion;
  F1Report report;
};

// Per-sample forward at natural length, argmax prediction (lowest index on
// ties), macro F1 over the fixed three classes. Never mutates the model.
EvalResult evaluate(Model& model, const FeatureDataset& data);

std::vector<std::vector<float>> snapshot_state(Model& model);
void restore_state(Model& model, const std::vector<std::vector<float>>& snapshot);

struct TrainOutcome {
  int best_epoch = 0;  // 1-based epoch whose weights the model ends up with
  double best_val_f1 = 0.0;
  bool used_validation = false;
};

// Full training loop with best-epoch checkpoint selection: after every
// epoch the model is scored on valid, and the weights of the highest
// validation F1 (earliest epoch on ties) are restored at the end. With no
// validation set the final weights stand. on_epoch, if given, sees
// (epoch, mean train loss, validation F1) after each epoch; the F1 is NaN
// when there is no validation set.
TrainOutcome train_model(
    Model& model, const FeatureDataset& train, const FeatureDataset* valid,
    const TrainConfig& cfg, Prng& rng,
    const std::function<void(int, double, double)>& on_epoch = {});

struct RunResult {
  uint64_t seed = 0;
  int best_epoch = 0;
  double val_f1 = 0.0;
  double test_f1 = 0.0;
  ConfusionMatrix confusion;  // on the test set, with the selected weights
};

struct ExperimentReport {
  std::string model_name;
  int n_runs = 0;
  std::vector<RunResult> per_run;
  double val_mean = 0.0, val_std = 0.0;
  double test_mean = 0.0, test_std = 0.0;
};

// n_runs independent train/eval cycles; run r builds a fresh model and
// generator from cfg.seed + r. Aggregates are mean and sample stddev of the
// per-run F1 scores.
ExperimentReport run_experiment(
    const std::string& model_name,
    const std::function<std::unique_ptr<Model>(Prng&)>& factory,
    const TrainConfig& cfg, int n_runs, const FeatureDataset& train,
    const FeatureDataset& valid, const FeatureDataset& test);

// One self-supervised step: per gram, draw time masks, zero those frames,
// reconstruct, and take the mean absolute error over masked frames only.
// Samples whose draws produce no masked frame contribute nothing; when no
// frame is masked anywhere the step is skipped and the loss is 0. Frequency
// mask settings in params are ignored here.
double time_alteration_pretrain_step(TransformerModel& model,
                                     std::span<const Matrix> batch,
                                     const SpecAugmentParams& params,
                                     AdamOptimizer& opt, double lr, Prng& rng);

}  // namespace ser
