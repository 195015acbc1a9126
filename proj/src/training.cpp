#include "serkit/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "serkit/autodiff.hpp"
#include "serkit/errors.hpp"

namespace ser {

void adam_step(std::span<float> param, std::span<const float> grad,
               AdamState& state, int64_t t, double lr, double beta1,
               double beta2, double eps, const std::string& name) {
  if (param.size() != grad.size()) {
    throw ShapeError("adam_step: gradient size mismatch for '" + name + "'");
  }
  if (t < 1) {
    throw InputError("adam_step: step count must start at 1");
  }
  if (state.m.size() != param.size()) {
    state.m.assign(param.size(), 0.0f);
    state.v.assign(param.size(), 0.0f);
  }
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    if (!std::isfinite(g)) {
      throw NumericError("non-finite gradient in parameter '" + name + "'");
    }
    const double m = beta1 * state.m[i] + (1.0 - beta1) * g;
    const double v = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    state.m[i] = static_cast<float>(m);
    state.v[i] = static_cast<float>(v);
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    param[i] = static_cast<float>(param[i] - lr * m_hat / (std::sqrt(v_hat) + eps));
  }
}

AdamOptimizer::AdamOptimizer(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(std::vector<NamedParam>& params, double lr) {
  if (states_.empty()) {
    states_.resize(params.size());
  } else if (states_.size() != params.size()) {
    throw InputError("AdamOptimizer: parameter count changed between steps");
  }
  ++t_;
  for (size_t i = 0; i < params.size(); ++i) {
    auto& tensor = params[i].tensor;
    if (tensor.grad().empty()) {
      throw InputError("AdamOptimizer: parameter '" + params[i].name +
                       "' has no gradient");
    }
    auto values = tensor.values();
    adam_step({values.data(), values.size()}, tensor.grad(), states_[i], t_, lr,
              beta1_, beta2_, eps_, params[i].name);
  }
}

double warmup_lr(int64_t step, int model_dim, int64_t warmup_steps) {
  if (step < 1) {
    throw InputError("warmup_lr: step counts from 1");
  }
  if (model_dim < 1 || warmup_steps < 1) {
    throw InputError("warmup_lr: model_dim and warmup_steps must be positive");
  }
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return std::pow(static_cast<double>(model_dim), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

namespace {

// Stacks grams into one padded batch tensor. Zero padding beyond each
// sample's frame count; lengths records the true counts.
Tensor make_batch(const std::vector<const Matrix*>& grams, BatchLayout layout,
                  std::vector<int>& lengths) {
  const int n = static_cast<int>(grams.size());
  int max_t = 0;
  const int bins = grams[0]->cols();
  lengths.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (grams[static_cast<size_t>(i)]->cols() != bins) {
      throw ShapeError("make_batch: grams disagree on bin count");
    }
    lengths[static_cast<size_t>(i)] = grams[static_cast<size_t>(i)]->rows();
    max_t = std::max(max_t, grams[static_cast<size_t>(i)]->rows());
  }

  const std::vector<int> shape = layout == BatchLayout::kImage
                                     ? std::vector<int>{n, 1, max_t, bins}
                                     : std::vector<int>{n, max_t, bins};
  Tensor batch = Tensor::zeros(shape);
  auto out = batch.values();
  for (int i = 0; i < n; ++i) {
    const Matrix& gram = *grams[static_cast<size_t>(i)];
    float* dst = out.data() + static_cast<size_t>(i) * max_t * bins;
    std::copy(gram.data().begin(), gram.data().end(), dst);
  }
  return batch;
}

double pick_lr(const TrainConfig& cfg, const Model& model, int64_t step) {
  if (cfg.schedule == Schedule::kConstant) {
    return cfg.base_lr;
  }
  if (model.model_dim() < 1) {
    throw ConfigError("warmup schedule needs a transformer model");
  }
  return warmup_lr(step, model.model_dim(), cfg.warmup_steps);
}

Label argmax_label(const float* row, int k) {
  int best = 0;
  for (int j = 1; j < k; ++j) {
    if (row[j] > row[best]) {
      best = j;
    }
  }
  return static_cast<Label>(best);
}

}  // namespace

EpochResult train_epoch(Model& model, const FeatureDataset& data,
                        const TrainConfig& cfg, AdamOptimizer& opt, Prng& rng,
                        int64_t& global_step) {
  if (data.size() == 0) {
    throw InputError("train_epoch: empty dataset");
  }
  if (data.features.size() != data.labels.size()) {
    throw InputError("train_epoch: feature/label count mismatch");
  }
  if (cfg.batch_size < 1) {
    throw ConfigError("train_epoch: batch_size must be positive");
  }

  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  auto params = model.parameters();
  double loss_sum = 0.0;
  const size_t n = data.size();
  for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch_size)) {
    const size_t end = std::min(n, start + static_cast<size_t>(cfg.batch_size));
    const int bs = static_cast<int>(end - start);

    // Augmented copies live here so the batch builder can point at either
    // the original gram or its masked version.
    std::vector<Matrix> augmented;
    std::vector<const Matrix*> grams(static_cast<size_t>(bs));
    std::vector<int> targets(static_cast<size_t>(bs));
    augmented.reserve(static_cast<size_t>(bs));
    for (int i = 0; i < bs; ++i) {
      const size_t idx = order[start + static_cast<size_t>(i)];
      const Matrix& gram = data.features[idx];
      targets[static_cast<size_t>(i)] = static_cast<int>(data.labels[idx]);
      if (cfg.augment) {
        const auto masks =
            sample_masks(gram.rows(), gram.cols(), *cfg.augment, rng);
        augmented.push_back(apply_masks(gram, masks));
        grams[static_cast<size_t>(i)] = &augmented.back();
      } else {
        grams[static_cast<size_t>(i)] = &gram;
      }
    }

    std::vector<int> lengths;
    const Tensor batch = make_batch(grams, model.batch_layout(), lengths);
    const Tensor logits = model.forward(batch, lengths, Mode::kTrain, &rng);
    const Tensor loss = softmax_cross_entropy(logits, targets);

    for (auto& param : params) {
      param.tensor.zero_grad();
    }
    backward(loss);

    ++global_step;
    opt.step(params, pick_lr(cfg, model, global_step));
    loss_sum += static_cast<double>(loss.item()) * bs;
  }
  return {loss_sum / static_cast<double>(n)};
}

EvalResult evaluate(Model& model, const FeatureDataset& data) {
  if (data.size() == 0) {
    throw InputError("evaluate: empty dataset");
  }
  if (data.features.size() != data.labels.size()) {
    throw InputError("evaluate: feature/label count mismatch");
  }
  std::vector<Label> predicted;
  predicted.reserve(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    const Matrix& gram = data.features[i];
    std::vector<int> lengths;
    const Tensor batch =
        make_batch({&gram}, model.batch_layout(), lengths);
    const Tensor logits = model.forward(batch, lengths, Mode::kEval, nullptr);
    predicted.push_back(argmax_label(logits.values().data(), logits.dim(1)));
  }
  EvalResult result;
  result.confusion = confusion_matrix(data.labels, predicted);
  result.report = f1_from_confusion(result.confusion);
  result.macro_f1 = result.report.macro_f1;
  return result;
}

std::vector<std::vector<float>> snapshot_state(Model& model) {
  std::vector<std::vector<float>> snapshot;
  for (const auto& entry : model.state()) {
    snapshot.push_back(*entry.data);
  }
  return snapshot;
}

void restore_state(Model& model, const std::vector<std::vector<float>>& snapshot) {
  auto entries = model.state();
  if (entries.size() != snapshot.size()) {
    throw InputError("restore_state: snapshot entry count mismatch");
  }
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].data->size() != snapshot[i].size()) {
      throw InputError("restore_state: size mismatch in '" + entries[i].name + "'");
    }
    *entries[i].data = snapshot[i];
  }
}

TrainOutcome train_model(
    Model& model, const FeatureDataset& train, const FeatureDataset* valid,
    const TrainConfig& cfg, Prng& rng,
    const std::function<void(int, double, double)>& on_epoch) {
  if (cfg.epochs < 1) {
    throw ConfigError("train_model: epochs must be positive");
  }

  AdamOptimizer opt;
  int64_t global_step = 0;
  TrainOutcome outcome;
  outcome.used_validation = valid != nullptr;
  double best_f1 = -1.0;
  std::vector<std::vector<float>> best_state;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const EpochResult epoch_result =
        train_epoch(model, train, cfg, opt, rng, global_step);
    double val_f1 = std::numeric_limits<double>::quiet_NaN();
    if (valid != nullptr) {
      val_f1 = evaluate(model, *valid).macro_f1;
      // Strict improvement keeps the earliest epoch on ties.
      if (val_f1 > best_f1) {
        best_f1 = val_f1;
        best_state = snapshot_state(model);
        outcome.best_epoch = epoch;
      }
    }
    if (on_epoch) {
      on_epoch(epoch, epoch_result.mean_loss, val_f1);
    }
  }

  if (valid != nullptr) {
    restore_state(model, best_state);
    outcome.best_val_f1 = best_f1;
  } else {
    outcome.best_epoch = cfg.epochs;
  }
  return outcome;
}

ExperimentReport run_experiment(
    const std::string& model_name,
    const std::function<std::unique_ptr<Model>(Prng&)>& factory,
    const TrainConfig& cfg, int n_runs, const FeatureDataset& train,
    const FeatureDataset& valid, const FeatureDataset& test) {
  if (n_runs < 1) {
    throw ConfigError("run_experiment: n_runs must be positive");
  }

  ExperimentReport report;
  report.model_name = model_name;
  report.n_runs = n_runs;
  std::vector<double> val_scores, test_scores;
  for (int r = 0; r < n_runs; ++r) {
    const uint64_t run_seed = cfg.seed + static_cast<uint64_t>(r);
    Prng rng(run_seed);
    auto model = factory(rng);

    const TrainOutcome outcome = train_model(*model, train, &valid, cfg, rng);
    const EvalResult test_result = evaluate(*model, test);

    RunResult run;
    run.seed = run_seed;
    run.best_epoch = outcome.best_epoch;
    run.val_f1 = outcome.best_val_f1;
    run.test_f1 = test_result.macro_f1;
    run.confusion = test_result.confusion;
    report.per_run.push_back(run);
    val_scores.push_back(run.val_f1);
    test_scores.push_back(run.test_f1);
  }

  std::tie(report.val_mean, report.val_std) = aggregate_runs(val_scores);
  std::tie(report.test_mean, report.test_std) = aggregate_runs(test_scores);
  return report;
}

double time_alteration_pretrain_step(TransformerModel& model,
                                     std::span<const Matrix> batch,
                                     const SpecAugmentParams& params,
                                     AdamOptimizer& opt, double lr, Prng& rng) {
  if (batch.empty()) {
    throw InputError("time_alteration_pretrain_step: empty batch");
  }
  SpecAugmentParams time_only = params;
  time_only.n_freq_masks = 0;

  Tensor total;
  int masked_samples = 0;
  for (const Matrix& gram : batch) {
    const auto masks = sample_masks(gram.rows(), gram.cols(), time_only, rng);
    std::vector<uint8_t> row_mask(static_cast<size_t>(gram.rows()), 0);
    int covered = 0;
    for (const auto& mask : masks) {
      for (int t = mask.start; t < mask.start + mask.length; ++t) {
        if (!row_mask[static_cast<size_t>(t)]) {
          row_mask[static_cast<size_t>(t)] = 1;
          ++covered;
        }
      }
    }
    if (covered == 0) {
      continue;
    }
    const Matrix corrupted = apply_masks(gram, masks);
    const Tensor tokens = Tensor::from_data({gram.rows(), gram.cols()},
                                            corrupted.data());
    const Tensor recon = model.reconstruct(tokens, Mode::kTrain, &rng);
    // Mean absolute error over the masked cells only.
    const Tensor sample_loss =
        scale(masked_abs_sum(recon, gram, row_mask),
              1.0f / (static_cast<float>(covered) * gram.cols()));
    total = total.defined() ? add(total, sample_loss) : sample_loss;
    ++masked_samples;
  }

  if (masked_samples == 0) {
    return 0.0;
  }
  const Tensor loss = scale(total, 1.0f / static_cast<float>(masked_samples));
  auto params_list = model.parameters();
  for (auto& param : params_list) {
    param.tensor.zero_grad();
  }
  backward(loss);
  opt.step(params_list, lr);
  return static_cast<double>(loss.item());
}

}  // namespace ser
