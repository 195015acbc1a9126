#include "serkit/models.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <string>

#include "serkit/errors.hpp"

namespace ser {

Matrix sinusoidal_positional_encoding(int n_frames, int d) {
  if (n_frames < 1 || d < 2 || d % 2 != 0) {
    throw InputError("positional encoding needs n_frames >= 1 and even d >= 2");
  }
  Matrix pe(n_frames, d);
  for (int t = 0; t < n_frames; ++t) {
    float* row = pe.row(t);
    for (int i = 0; i < d / 2; ++i) {
      const double angle =
          t / std::pow(10000.0, 2.0 * i / static_cast<double>(d));
      row[2 * i] = static_cast<float>(std::sin(angle));
      row[2 * i + 1] = static_cast<float>(std::cos(angle));
    }
  }
  return pe;
}

void kaiming_uniform_fill(Tensor& weight, int fan_in, Prng& rng) {
  if (fan_in < 1) {
    throw InputError("kaiming_uniform_fill: fan_in must be positive");
  }
  const double bound = std::sqrt(6.0 / fan_in);
  for (float& v : weight.values()) {
    v = static_cast<float>(rng.uniform_range(-bound, bound));
  }
}

namespace {

Tensor make_param(std::vector<int> shape) {
  return Tensor::zeros(std::move(shape), true);
}

Tensor make_const_param(std::vector<int> shape, float fill) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (float& v : t.values()) {
    v = fill;
  }
  return t;
}

std::string dims_str(int a, int b) {
  return std::to_string(a) + "->" + std::to_string(b);
}

// conv -> batchnorm -> relu, the repeated unit of every CNN variant.
struct ConvBlock {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  Tensor weight, bias;
  Tensor gamma, beta;
  std::vector<float> running_mean, running_var;

  ConvBlock(std::string block_name, int in_ch, int out_ch, int k, Prng& rng)
      : name(std::move(block_name)),
        in_channels(in_ch),
        out_channels(out_ch),
        kernel(k),
        weight(make_param({out_ch, in_ch, k, k})),
        bias(make_param({out_ch})),
        gamma(make_const_param({out_ch}, 1.0f)),
        beta(make_param({out_ch})),
        running_mean(static_cast<size_t>(out_ch), 0.0f),
        running_var(static_cast<size_t>(out_ch), 1.0f) {
    kaiming_uniform_fill(weight, in_ch * k * k, rng);
  }

  Tensor apply(const Tensor& x, Mode mode) {
    Tensor y = conv2d(x, weight, bias, kernel / 2);
    y = batch_norm2d(y, gamma, beta, running_mean, running_var, mode);
    return relu(y);
  }
};

class CnnModel : public Model {
 public:
  CnnModel(const CnnSpec& spec, Prng& rng) : spec_(spec) {
    if (spec.head_units < 1) {
      throw InputError("build_cnn: head_units must be positive");
    }
    const std::vector<int> channels = spec.stage_channels();
    const int per_stage = spec.blocks_per_stage();
    int in_ch = 1;
    for (size_t s = 0; s < channels.size(); ++s) {
      std::vector<ConvBlock> stage;
      for (int b = 0; b < per_stage; ++b) {
        std::string name = "conv" + std::to_string(s + 1);
        if (per_stage > 1) {
          name += static_cast<char>('a' + b);
        }
        stage.emplace_back(name, in_ch, channels[s], spec.kernel(), rng);
        in_ch = channels[s];
      }
      stages_.push_back(std::move(stage));
    }
    fc1_w_ = make_param({spec.fc_hidden(), channels.back()});
    fc1_b_ = make_param({spec.fc_hidden()});
    kaiming_uniform_fill(fc1_w_, channels.back(), rng);
    head_w_ = make_param({spec.head_units, spec.fc_hidden()});
    head_b_ = make_param({spec.head_units});
    kaiming_uniform_fill(head_w_, spec.fc_hidden(), rng);
  }

  Tensor forward(const Tensor& batch, const std::vector<int>& lengths,
                 Mode mode, Prng* rng) override {
    if (batch.rank() != 4 || batch.dim(1) != 1 || batch.dim(3) != 64) {
      throw ShapeError("cnn forward: input must be [N,1,T,64]");
    }
    if (static_cast<int>(lengths.size()) != batch.dim(0)) {
      throw ShapeError("cnn forward: one length per sample required");
    }
    if (mode == Mode::kTrain && rng == nullptr) {
      throw InputError("cnn forward: training mode needs a generator");
    }
    Tensor x = batch;
    for (size_t s = 0; s < stages_.size(); ++s) {
      for (auto& block : stages_[s]) {
        x = block.apply(x, mode);
      }
      if (s + 1 < stages_.size()) {
        x = avg_pool2d(x);
      }
    }
    x = global_avg_pool(x);
    x = relu(linear(x, fc1_w_, fc1_b_));
    x = dropout(x, spec_.dropout, mode, rng);
    return linear(x, head_w_, head_b_);
  }

  std::vector<NamedParam> parameters() override {
    std::vector<NamedParam> params;
    for (auto& stage : stages_) {
      for (auto& block : stage) {
        const std::string bn = "bn" + block.name.substr(4);
        params.push_back({block.name + ".weight", block.weight});
        params.push_back({block.name + ".bias", block.bias});
        params.push_back({bn + ".gamma", block.gamma});
        params.push_back({bn + ".beta", block.beta});
      }
    }
    params.push_back({"fc1.weight", fc1_w_});
    params.push_back({"fc1.bias", fc1_b_});
    params.push_back({"head.weight", head_w_});
    params.push_back({"head.bias", head_b_});
    return params;
  }

  std::vector<StateEntry> state() override {
    std::vector<StateEntry> entries;
    auto add_param = [&entries](const std::string& name, Tensor& t) {
      entries.push_back({name, t.shape(), &t.node()->value});
    };
    for (auto& stage : stages_) {
      for (auto& block : stage) {
        const std::string bn = "bn" + block.name.substr(4);
        add_param(block.name + ".weight", block.weight);
        add_param(block.name + ".bias", block.bias);
        add_param(bn + ".gamma", block.gamma);
        add_param(bn + ".beta", block.beta);
        entries.push_back({bn + ".running_mean",
                           {block.out_channels},
                           &block.running_mean});
        entries.push_back({bn + ".running_var",
                           {block.out_channels},
                           &block.running_var});
      }
    }
    add_param("fc1.weight", fc1_w_);
    add_param("fc1.bias", fc1_b_);
    add_param("head.weight", head_w_);
    add_param("head.bias", head_b_);
    return entries;
  }

  std::vector<std::string> describe() const override {
    std::vector<std::string> lines;
    lines.push_back("input 1x64");
    const std::string k = std::to_string(spec_.kernel());
    for (size_t s = 0; s < stages_.size(); ++s) {
      for (const auto& block : stages_[s]) {
        lines.push_back("conv " + k + "x" + k + " " +
                        dims_str(block.in_channels, block.out_channels) +
                        " pad " + std::to_string(block.kernel / 2));
        lines.push_back("batchnorm " + std::to_string(block.out_channels));
        lines.push_back("relu");
      }
      if (s + 1 < stages_.size()) {
        lines.push_back("avgpool 2x2");
      }
    }
    lines.push_back("global_avgpool");
    lines.push_back("fc " + dims_str(spec_.stage_channels().back(), spec_.fc_hidden()));
    lines.push_back("relu");
    lines.push_back("dropout " + format_p());
    lines.push_back("fc " + dims_str(spec_.fc_hidden(), spec_.head_units));
    return lines;
  }

  void replace_head(int units, Prng& rng) override {
    if (units < 1) {
      throw InputError("replace_head: units must be positive");
    }
    spec_.head_units = units;
    head_w_ = make_param({units, spec_.fc_hidden()});
    head_b_ = make_param({units});
    kaiming_uniform_fill(head_w_, spec_.fc_hidden(), rng);
  }

  int model_dim() const override { return 0; }
  int head_units() const override { return spec_.head_units; }
  BatchLayout batch_layout() const override { return BatchLayout::kImage; }

 private:
  std::string format_p() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2g", static_cast<double>(spec_.dropout));
    return buf;
  }

  CnnSpec spec_;
  std::vector<std::vector<ConvBlock>> stages_;
  Tensor fc1_w_, fc1_b_;
  Tensor head_w_, head_b_;
};

}  // namespace

std::unique_ptr<Model> build_cnn(const CnnSpec& spec, Prng& rng) {
  return std::make_unique<CnnModel>(spec, rng);
}

TransformerModel::TransformerModel(const TransformerSpec& spec, Prng& rng)
    : spec_(spec) {
  if (spec.d < 2 || spec.d % 2 != 0) {
    throw InputError("build_transformer: d must be even and >= 2");
  }
  if (spec.n_heads < 1 || spec.d % spec.n_heads != 0) {
    throw InputError("build_transformer: d must divide into n_heads");
  }
  if (spec.n_layers < 1 || spec.input_dim < 1 || spec.head_units < 1) {
    throw InputError("build_transformer: bad layer, input or head count");
  }

  proj_w_ = make_param({spec.d, spec.input_dim});
  proj_b_ = make_param({spec.d});
  kaiming_uniform_fill(proj_w_, spec.input_dim, rng);

  layers_.resize(static_cast<size_t>(spec.n_layers));
  for (auto& layer : layers_) {
    for (Tensor* w : {&layer.wq, &layer.wk, &layer.wv, &layer.wo}) {
      *w = make_param({spec.d, spec.d});
      kaiming_uniform_fill(*w, spec.d, rng);
    }
    layer.ln1_gamma = make_const_param({spec.d}, 1.0f);
    layer.ln1_beta = make_param({spec.d});
    layer.ffn1_w = make_param({spec.ffn_dim(), spec.d});
    layer.ffn1_b = make_param({spec.ffn_dim()});
    kaiming_uniform_fill(layer.ffn1_w, spec.d, rng);
    layer.ffn2_w = make_param({spec.d, spec.ffn_dim()});
    layer.ffn2_b = make_param({spec.d});
    kaiming_uniform_fill(layer.ffn2_w, spec.ffn_dim(), rng);
    layer.ln2_gamma = make_const_param({spec.d}, 1.0f);
    layer.ln2_beta = make_param({spec.d});
  }

  const int out = spec.reconstruction ? spec.input_dim : spec.head_units;
  head_w_ = make_param({out, spec.d});
  head_b_ = make_param({out});
  kaiming_uniform_fill(head_w_, spec.d, rng);
}

Tensor TransformerModel::encode(const Tensor& tokens, Mode mode, Prng* rng) {
  if (tokens.rank() != 2 || tokens.dim(1) != spec_.input_dim) {
    throw ShapeError("transformer encode: tokens must be [T," +
                     std::to_string(spec_.input_dim) + "]");
  }
  if (mode == Mode::kTrain && rng == nullptr) {
    throw InputError("transformer encode: training mode needs a generator");
  }
  const int n_frames = tokens.dim(0);

  Tensor h = linear(tokens, proj_w_, proj_b_);
  const Matrix pe = sinusoidal_positional_encoding(n_frames, spec_.d);
  h = add(h, Tensor::from_data({n_frames, spec_.d}, pe.data()));

  for (auto& layer : layers_) {
    Tensor attn =
        multi_head_attention(h, spec_.n_heads, layer.wq, layer.wk, layer.wv, layer.wo);
    attn = dropout(attn, spec_.dropout, mode, rng);
    h = layer_norm(add(h, attn), layer.ln1_gamma, layer.ln1_beta);
    Tensor ffn = linear(relu(linear(h, layer.ffn1_w, layer.ffn1_b)),
                        layer.ffn2_w, layer.ffn2_b);
    ffn = dropout(ffn, spec_.dropout, mode, rng);
    h = layer_norm(add(h, ffn), layer.ln2_gamma, layer.ln2_beta);
  }
  return h;
}

Tensor TransformerModel::forward(const Tensor& batch,
                                 const std::vector<int>& lengths, Mode mode,
                                 Prng* rng) {
  if (spec_.reconstruction) {
    throw InputError(
        "transformer forward: model has a reconstruction head, not a classifier");
  }
  if (batch.rank() != 3 || batch.dim(2) != spec_.input_dim) {
    throw ShapeError("transformer forward: input must be [N,T," +
                     std::to_string(spec_.input_dim) + "]");
  }
  const int n = batch.dim(0);
  const int n_frames = batch.dim(1);
  if (static_cast<int>(lengths.size()) != n) {
    throw ShapeError("transformer forward: one length per sample required");
  }
  // Each sample is sliced back to its natural length before encoding, so
  // padded positions never enter attention and a batched forward matches the
  // per-sample one bit for bit.
  std::vector<Tensor> pooled;
  pooled.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int len = lengths[static_cast<size_t>(i)];
    if (len < 1 || len > n_frames) {
      throw InputError("transformer forward: length outside [1, T]");
    }
    Tensor tokens = select_plane(batch, i);
    if (len < n_frames) {
      tokens = row_slice(tokens, 0, len);
    }
    const Tensor h = encode(tokens, mode, rng);
    pooled.push_back(mean_rows(h, len));
  }
  return linear(stack_rows(pooled), head_w_, head_b_);
}

Tensor TransformerModel::reconstruct(const Tensor& tokens, Mode mode, Prng* rng) {
  if (!spec_.reconstruction) {
    throw InputError("transformer reconstruct: model has a classifier head");
  }
  return linear(encode(tokens, mode, rng), head_w_, head_b_);
}

std::vector<NamedParam> TransformerModel::parameters() {
  std::vector<NamedParam> params;
  params.push_back({"proj.weight", proj_w_});
  params.push_back({"proj.bias", proj_b_});
  for (size_t i = 0; i < layers_.size(); ++i) {
    auto& layer = layers_[i];
    const std::string p = "layer" + std::to_string(i + 1) + ".";
    params.push_back({p + "wq", layer.wq});
    params.push_back({p + "wk", layer.wk});
    params.push_back({p + "wv", layer.wv});
    params.push_back({p + "wo", layer.wo});
    params.push_back({p + "ln1.gamma", layer.ln1_gamma});
    params.push_back({p + "ln1.beta", layer.ln1_beta});
    params.push_back({p + "ffn1.weight", layer.ffn1_w});
    params.push_back({p + "ffn1.bias", layer.ffn1_b});
    params.push_back({p + "ffn2.weight", layer.ffn2_w});
    params.push_back({p + "ffn2.bias", layer.ffn2_b});
    params.push_back({p + "ln2.gamma", layer.ln2_gamma});
    params.push_back({p + "ln2.beta", layer.ln2_beta});
  }
  params.push_back({"head.weight", head_w_});
  params.push_back({"head.bias", head_b_});
  return params;
}

std::vector<StateEntry> TransformerModel::state() {
  std::vector<StateEntry> entries;
  for (auto& param : parameters()) {
    entries.push_back(
        {param.name, param.tensor.shape(), &param.tensor.node()->value});
  }
  return entries;
}

std::vector<std::string> TransformerModel::describe() const {
  std::vector<std::string> lines;
  lines.push_back("input " + std::to_string(spec_.input_dim));
  lines.push_back("fc " + dims_str(spec_.input_dim, spec_.d));
  lines.push_back("positional_encoding");
  char pbuf[16];
  std::snprintf(pbuf, sizeof pbuf, "%.2g", static_cast<double>(spec_.dropout));
  for (int i = 0; i < spec_.n_layers; ++i) {
    lines.push_back("attention " + std::to_string(spec_.n_heads) + " heads");
    lines.push_back(std::string("dropout ") + pbuf);
    lines.push_back("residual");
    lines.push_back("layernorm " + std::to_string(spec_.d));
    lines.push_back("fc " + dims_str(spec_.d, spec_.ffn_dim()));
    lines.push_back("relu");
    lines.push_back("fc " + dims_str(spec_.ffn_dim(), spec_.d));
    lines.push_back(std::string("dropout ") + pbuf);
    lines.push_back("residual");
    lines.push_back("layernorm " + std::to_string(spec_.d));
  }
  if (spec_.reconstruction) {
    lines.push_back("reconstruction fc " + dims_str(spec_.d, spec_.input_dim));
  } else {
    lines.push_back("mean_pool");
    lines.push_back("fc " + dims_str(spec_.d, spec_.head_units));
  }
  return lines;
}

void TransformerModel::replace_head(int units, Prng& rng) {
  if (units < 1) {
    throw InputError("replace_head: units must be positive");
  }
  spec_.reconstruction = false;
  spec_.head_units = units;
  head_w_ = make_param({units, spec_.d});
  head_b_ = make_param({units});
  kaiming_uniform_fill(head_w_, spec_.d, rng);
}

int TransformerModel::head_units() const {
  return spec_.reconstruction ? spec_.input_dim : spec_.head_units;
}

std::unique_ptr<TransformerModel> build_transformer(const TransformerSpec& spec,
                                                    Prng& rng) {
  return std::make_unique<TransformerModel>(spec, rng);
}

std::vector<TensorRecord> export_state(Model& model) {
  std::vector<TensorRecord> records;
  for (const auto& entry : model.state()) {
    records.push_back({entry.name, entry.shape, *entry.data});
  }
  return records;
}

void import_state(Model& model, const std::vector<TensorRecord>& records) {
  std::map<std::string, const TensorRecord*> by_name;
  for (const auto& record : records) {
    if (!by_name.emplace(record.name, &record).second) {
      throw FormatError("duplicate tensor '" + record.name + "' in snapshot");
    }
  }
  auto entries = model.state();
  if (by_name.size() != entries.size()) {
    throw FormatError("snapshot holds " + std::to_string(by_name.size()) +
                      " tensors, model expects " +
                      std::to_string(entries.size()));
  }
  for (auto& entry : entries) {
    const auto it = by_name.find(entry.name);
    if (it == by_name.end()) {
      throw FormatError("snapshot is missing tensor '" + entry.name + "'");
    }
    if (it->second->shape != entry.shape) {
      throw FormatError("snapshot tensor '" + entry.name +
                        "' has the wrong shape for this model");
    }
    *entry.data = it->second->data;
  }
}

}  // namespace ser
