#pragma once

#include <memory>
#include <string>
#include <vector>

#include "serkit/autodiff.hpp"
#include "serkit/checkpoint.hpp"
#include "serkit/matrix.hpp"
#include "serkit/prng.hpp"

namespace ser {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// One named buffer of model state: trainable parameters and batchnorm
// running statistics alike. Checkpointing walks this list.
struct StateEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<float>* data;
};

// How training batches are laid out for a model: CNNs consume a gram as a
// one-channel image, transformers as a token sequence.
enum class BatchLayout {
  kImage,   // [N, 1, T, bins]
  kTokens,  // [N, T, bins]
};

class Model {
 public:
  virtual ~Model() = default;

  // Batched forward to class logits [N, head_units]. CNNs take [N,1,T,64]
  // grams (zero-padded along time when lengths differ); transformers take
  // [N,T,C] token grams. lengths gives the unpadded frame count per sample.
  // rng may be null in eval mode.
  virtual Tensor forward(const Tensor& batch, const std::vector<int>& lengths,
                         Mode mode, Prng* rng) = 0;

  // Trainable tensors in a fixed, documented order.
  virtual std::vector<NamedParam> parameters() = 0;

  // parameters() plus non-trainable buffers, for checkpoints and snapshots.
  virtual std::vector<StateEntry> state() = 0;

  // One line per layer, the architecture fingerprint written to golden files.
  virtual std::vector<std::string> describe() const = 0;

  // Swaps the output head for a freshly initialized one with the given
  // width, leaving the backbone untouched.
  virtual void replace_head(int units, Prng& rng) = 0;

  // Transformer model width for the warmup schedule; 0 for CNNs.
  virtual int model_dim() const = 0;

  virtual int head_units() const = 0;

  virtual BatchLayout batch_layout() const = 0;
};

enum class CnnVariant {
  kCnn6,
  kCnn10,
  kCnn14,
};

struct CnnSpec {
  CnnVariant variant = CnnVariant::kCnn6;
  int head_units = 527;
  float dropout = 0.2f;

  int kernel() const { return variant == CnnVariant::kCnn6 ? 5 : 3; }
  int blocks_per_stage() const { return variant == CnnVariant::kCnn6 ? 1 : 2; }
  std::vector<int> stage_channels() const {
    if (variant == CnnVariant::kCnn14) {
      return {64, 128, 256, 512, 1024, 2048};
    }
    return {64, 128, 256, 512};
  }
  int fc_hidden() const { return variant == CnnVariant::kCnn14 ? 2048 : 512; }
};

struct TransformerSpec {
  int n_layers = 3;
  int d = 512;
  int n_heads = 8;
  int input_dim = 40;
  int head_units = 3;
  float dropout = 0.2f;
  // With a reconstruction head the model predicts its input frames instead
  // of class logits; replace_head later converts it into a classifier.
  bool reconstruction = false;

  int ffn_dim() const { return 4 * d; }
};

// PE[t, 2i] = sin(t / 10000^(2i/d)), PE[t, 2i+1] = cos(t / 10000^(2i/d)).
Matrix sinusoidal_positional_encoding(int n_frames, int d);

// Kaiming-uniform fill, bound sqrt(6 / fan_in), values drawn in storage
// order. Weight init everywhere; biases and norm parameters are constant.
void kaiming_uniform_fill(Tensor& weight, int fan_in, Prng& rng);

std::unique_ptr<Model> build_cnn(const CnnSpec& spec, Prng& rng);

class TransformerModel;
std::unique_ptr<TransformerModel> build_transformer(const TransformerSpec& spec,
                                                    Prng& rng);

class TransformerModel : public Model {
 public:
  TransformerModel(const TransformerSpec& spec, Prng& rng);

  Tensor forward(const Tensor& batch, const std::vector<int>& lengths,
                 Mode mode, Prng* rng) override;
  std::vector<NamedParam> parameters() override;
  std::vector<StateEntry> state() override;
  std::vector<std::string> describe() const override;
  void replace_head(int units, Prng& rng) override;
  int model_dim() const override { return spec_.d; }
  int head_units() const override;
  BatchLayout batch_layout() const override { return BatchLayout::kTokens; }

  // Encoder only: [T, input_dim] tokens to [T, d] hidden states.
  Tensor encode(const Tensor& tokens, Mode mode, Prng* rng);

  // Per-token reconstruction [T, input_dim]; requires the reconstruction
  // head.
  Tensor reconstruct(const Tensor& tokens, Mode mode, Prng* rng);

  const TransformerSpec& spec() const { return spec_; }

 private:
  struct Layer {
    Tensor wq, wk, wv, wo;
    Tensor ln1_gamma, ln1_beta;
    Tensor ffn1_w, ffn1_b;
    Tensor ffn2_w, ffn2_b;
    Tensor ln2_gamma, ln2_beta;
  };

  TransformerSpec spec_;
  Tensor proj_w_, proj_b_;
  std::vector<Layer> layers_;
  Tensor head_w_, head_b_;
};

// Snapshots every state tensor (weights plus running statistics) into
// checkpoint records, in the model's own declaration order.
std::vector<TensorRecord> export_state(Model& model);

// Restores a snapshot produced by export_state. Every record must match a
// state tensor by name and shape, with none missing and none left over;
// otherwise throws FormatError.
void import_state(Model& model, const std::vector<TensorRecord>& records);

}  // namespace ser
