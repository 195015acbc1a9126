#include "support/refops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace refops {

namespace {

size_t idx4(int i, int j, int k, int l, int d1, int d2, int d3) {
  return ((static_cast<size_t>(i) * d1 + j) * d2 + k) * d3 + l;
}

}  // namespace

dvec relu(const dvec& x) {
  dvec y(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    y[i] = x[i] > 0.0 ? x[i] : 0.0;
  }
  return y;
}

dvec sigmoid(const dvec& x) {
  dvec y(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    y[i] = 1.0 / (1.0 + std::exp(-x[i]));
  }
  return y;
}

dvec matmul(const dvec& a, int m, int k, const dvec& b, int n) {
  dvec y(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double av = a[static_cast<size_t>(i) * k + p];
      for (int j = 0; j < n; ++j) {
        y[static_cast<size_t>(i) * n + j] += av * b[static_cast<size_t>(p) * n + j];
      }
    }
  }
  return y;
}

dvec matmul_nt(const dvec& a, int m, int k, const dvec& b, int n) {
  dvec y(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        acc += a[static_cast<size_t>(i) * k + p] * b[static_cast<size_t>(j) * k + p];
      }
      y[static_cast<size_t>(i) * n + j] = acc;
    }
  }
  return y;
}

dvec linear(const dvec& x, int n, int in, const dvec& w, int out, const dvec* b) {
  dvec y = matmul_nt(x, n, in, w, out);
  if (b != nullptr) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < out; ++j) {
        y[static_cast<size_t>(i) * out + j] += (*b)[static_cast<size_t>(j)];
      }
    }
  }
  return y;
}

dvec softmax_rows(const dvec& x, int rows, int cols) {
  dvec y(x.size());
  for (int i = 0; i < rows; ++i) {
    const double* p = x.data() + static_cast<size_t>(i) * cols;
    double* q = y.data() + static_cast<size_t>(i) * cols;
    double mx = p[0];
    for (int j = 1; j < cols; ++j) {
      mx = std::max(mx, p[j]);
    }
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      q[j] = std::exp(p[j] - mx);
      sum += q[j];
    }
    for (int j = 0; j < cols; ++j) {
      q[j] /= sum;
    }
  }
  return y;
}

dvec layer_norm(const dvec& x, int rows, int d, const dvec& gamma,
                const dvec& beta, double eps) {
  dvec y(x.size());
  for (int r = 0; r < rows; ++r) {
    const double* p = x.data() + static_cast<size_t>(r) * d;
    double* q = y.data() + static_cast<size_t>(r) * d;
    double sum = 0.0, sum_sq = 0.0;
    for (int j = 0; j < d; ++j) {
      sum += p[j];
      sum_sq += p[j] * p[j];
    }
    const double mu = sum / d;
    const double var = std::max(0.0, sum_sq / d - mu * mu);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j) {
      q[j] = (p[j] - mu) * inv * gamma[static_cast<size_t>(j)] +
             beta[static_cast<size_t>(j)];
    }
  }
  return y;
}

dvec conv2d(const dvec& x, int n, int c_in, int h, int w, const dvec& weight,
            int c_out, int kh, int kw, const dvec* bias, int pad) {
  const int oh = h + 2 * pad - kh + 1;
  const int ow = w + 2 * pad - kw + 1;
  dvec y(static_cast<size_t>(n) * c_out * oh * ow, 0.0);
  for (int b = 0; b < n; ++b) {
    for (int oc = 0; oc < c_out; ++oc) {
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
          double acc = bias != nullptr ? (*bias)[static_cast<size_t>(oc)] : 0.0;
          for (int ic = 0; ic < c_in; ++ic) {
            for (int u = 0; u < kh; ++u) {
              const int r = i + u - pad;
              if (r < 0 || r >= h) {
                continue;
              }
              for (int v = 0; v < kw; ++v) {
                const int c = j + v - pad;
                if (c < 0 || c >= w) {
                  continue;
                }
                acc += x[idx4(b, ic, r, c, c_in, h, w)] *
                       weight[idx4(oc, ic, u, v, c_in, kh, kw)];
              }
            }
          }
          y[idx4(b, oc, i, j, c_out, oh, ow)] = acc;
        }
      }
    }
  }
  return y;
}

dvec batch_norm_train(const dvec& x, int n, int c, int h, int w,
                      const dvec& gamma, const dvec& beta, double eps) {
  const int m = n * h * w;
  dvec y(x.size());
  for (int ch = 0; ch < c; ++ch) {
    double sum = 0.0, sum_sq = 0.0;
    for (int b = 0; b < n; ++b) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          const double v = x[idx4(b, ch, i, j, c, h, w)];
          sum += v;
          sum_sq += v * v;
        }
      }
    }
    const double mu = sum / m;
    const double var = std::max(0.0, sum_sq / m - mu * mu);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int b = 0; b < n; ++b) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          const size_t at = idx4(b, ch, i, j, c, h, w);
          y[at] = (x[at] - mu) * inv * gamma[static_cast<size_t>(ch)] +
                  beta[static_cast<size_t>(ch)];
        }
      }
    }
  }
  return y;
}

dvec batch_norm_eval(const dvec& x, int n, int c, int h, int w,
                     const dvec& gamma, const dvec& beta, const dvec& mean,
                     const dvec& var, double eps) {
  dvec y(x.size());
  for (int ch = 0; ch < c; ++ch) {
    const double inv = 1.0 / std::sqrt(var[static_cast<size_t>(ch)] + eps);
    for (int b = 0; b < n; ++b) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          const size_t at = idx4(b, ch, i, j, c, h, w);
          y[at] = (x[at] - mean[static_cast<size_t>(ch)]) * inv *
                      gamma[static_cast<size_t>(ch)] +
                  beta[static_cast<size_t>(ch)];
        }
      }
    }
  }
  return y;
}

dvec avg_pool2d(const dvec& x, int n, int c, int h, int w, int* oh, int* ow) {
  const int ph = (h + 1) / 2;
  const int pw = (w + 1) / 2;
  dvec y(static_cast<size_t>(n) * c * ph * pw);
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      for (int i = 0; i < ph; ++i) {
        for (int j = 0; j < pw; ++j) {
          double acc = 0.0;
          for (int u = 0; u < 2; ++u) {
            for (int v = 0; v < 2; ++v) {
              const int r = std::min(2 * i + u, h - 1);
              const int s = std::min(2 * j + v, w - 1);
              acc += x[idx4(b, ch, r, s, c, h, w)];
            }
          }
          y[idx4(b, ch, i, j, c, ph, pw)] = acc / 4.0;
        }
      }
    }
  }
  if (oh != nullptr) {
    *oh = ph;
  }
  if (ow != nullptr) {
    *ow = pw;
  }
  return y;
}

dvec global_avg_pool(const dvec& x, int n, int c, int h, int w) {
  dvec y(static_cast<size_t>(n) * c, 0.0);
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          acc += x[idx4(b, ch, i, j, c, h, w)];
        }
      }
      y[static_cast<size_t>(b) * c + ch] = acc / (static_cast<double>(h) * w);
    }
  }
  return y;
}

dvec attention(const dvec& x, int t, int d, int n_heads, const dvec& wq,
               const dvec& wk, const dvec& wv, const dvec& wo) {
  const int dh = d / n_heads;
  const dvec q = matmul_nt(x, t, d, wq, d);
  const dvec k = matmul_nt(x, t, d, wk, d);
  const dvec v = matmul_nt(x, t, d, wv, d);
  dvec concat(static_cast<size_t>(t) * d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int head = 0; head < n_heads; ++head) {
    const int off = head * dh;
    dvec scores(static_cast<size_t>(t) * t);
    for (int i = 0; i < t; ++i) {
      for (int j = 0; j < t; ++j) {
        double acc = 0.0;
        for (int p = 0; p < dh; ++p) {
          acc += q[static_cast<size_t>(i) * d + off + p] *
                 k[static_cast<size_t>(j) * d + off + p];
        }
        scores[static_cast<size_t>(i) * t + j] = acc * scale;
      }
    }
    const dvec probs = softmax_rows(scores, t, t);
    for (int i = 0; i < t; ++i) {
      for (int p = 0; p < dh; ++p) {
        double acc = 0.0;
        for (int j = 0; j < t; ++j) {
          acc += probs[static_cast<size_t>(i) * t + j] *
                 v[static_cast<size_t>(j) * d + off + p];
        }
        concat[static_cast<size_t>(i) * d + off + p] = acc;
      }
    }
  }
  return matmul_nt(concat, t, d, wo, d);
}

dvec positional_encoding(int t, int d) {
  dvec pe(static_cast<size_t>(t) * d);
  for (int pos = 0; pos < t; ++pos) {
    for (int i = 0; i < d / 2; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * i / d);
      pe[static_cast<size_t>(pos) * d + 2 * i] = std::sin(angle);
      pe[static_cast<size_t>(pos) * d + 2 * i + 1] = std::cos(angle);
    }
  }
  return pe;
}

double softmax_cross_entropy(const dvec& logits, int n, int k,
                             const std::vector<int>& targets) {
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* row = logits.data() + static_cast<size_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) {
      mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      sum += std::exp(row[j] - mx);
    }
    loss += mx + std::log(sum) - row[targets[static_cast<size_t>(i)]];
  }
  return loss / n;
}

dvec mean_rows(const dvec& x, int rows, int cols, int n_rows) {
  (void)rows;
  dvec y(static_cast<size_t>(cols), 0.0);
  for (int i = 0; i < n_rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      y[static_cast<size_t>(j)] += x[static_cast<size_t>(i) * cols + j];
    }
  }
  for (double& v : y) {
    v /= n_rows;
  }
  return y;
}

double cnn_loss(const CnnRef& spec, const std::vector<dvec>& params,
                const dvec& input, int n, int h, int w,
                const std::vector<int>& targets) {
  size_t at = 0;
  auto next = [&params, &at]() -> const dvec& { return params[at++]; };

  dvec x = input;
  int c = 1, ch = h, cw = w;
  const int n_stages = static_cast<int>(spec.stage_channels.size());
  for (int s = 0; s < n_stages; ++s) {
    const int oc = spec.stage_channels[static_cast<size_t>(s)];
    for (int b = 0; b < spec.blocks_per_stage; ++b) {
      const dvec& weight = next();
      const dvec& bias = next();
      const dvec& gamma = next();
      const dvec& beta = next();
      x = conv2d(x, n, c, ch, cw, weight, oc, spec.kernel, spec.kernel, &bias,
                 spec.kernel / 2);
      c = oc;
      x = batch_norm_train(x, n, c, ch, cw, gamma, beta);
      x = relu(x);
    }
    if (s + 1 < n_stages) {
      x = avg_pool2d(x, n, c, ch, cw, &ch, &cw);
    }
  }
  x = global_avg_pool(x, n, c, ch, cw);
  const dvec& fc1_w = next();
  const dvec& fc1_b = next();
  x = relu(linear(x, n, c, fc1_w, spec.fc_hidden, &fc1_b));
  const dvec& head_w = next();
  const dvec& head_b = next();
  x = linear(x, n, spec.fc_hidden, head_w, spec.head_units, &head_b);
  if (at != params.size()) {
    throw std::logic_error("cnn_loss: param count mismatch");
  }
  return softmax_cross_entropy(x, n, spec.head_units, targets);
}

double transformer_loss(const TransformerRef& spec,
                        const std::vector<dvec>& params, const dvec& batch,
                        int n, int t, const std::vector<int>& lengths,
                        const std::vector<int>& targets) {
  size_t at = 0;
  auto next = [&params, &at]() -> const dvec& { return params[at++]; };
  const dvec& proj_w = next();
  const dvec& proj_b = next();

  struct LayerRef {
    const dvec *wq, *wk, *wv, *wo;
    const dvec *ln1_g, *ln1_b;
    const dvec *ffn1_w, *ffn1_b, *ffn2_w, *ffn2_b;
    const dvec *ln2_g, *ln2_b;
  };
  std::vector<LayerRef> layers;
  for (int l = 0; l < spec.n_layers; ++l) {
    LayerRef lr{};
    lr.wq = &next();
    lr.wk = &next();
    lr.wv = &next();
    lr.wo = &next();
    lr.ln1_g = &next();
    lr.ln1_b = &next();
    lr.ffn1_w = &next();
    lr.ffn1_b = &next();
    lr.ffn2_w = &next();
    lr.ffn2_b = &next();
    lr.ln2_g = &next();
    lr.ln2_b = &next();
    layers.push_back(lr);
  }
  const dvec& head_w = next();
  const dvec& head_b = next();
  if (at != params.size()) {
    throw std::logic_error("transformer_loss: param count mismatch");
  }

  const int d = spec.d;
  const int ffn = 4 * d;
  dvec pooled(static_cast<size_t>(n) * d);
  for (int s = 0; s < n; ++s) {
    const int len = lengths[static_cast<size_t>(s)];
    dvec tokens(static_cast<size_t>(len) * spec.input_dim);
    std::copy_n(batch.data() + (static_cast<size_t>(s) * t) * spec.input_dim,
                tokens.size(), tokens.data());
    dvec hidden = linear(tokens, len, spec.input_dim, proj_w, d, &proj_b);
    const dvec pe = positional_encoding(len, d);
    for (size_t i = 0; i < hidden.size(); ++i) {
      hidden[i] += pe[i];
    }
    for (const auto& lr : layers) {
      dvec attn = attention(hidden, len, d, spec.n_heads, *lr.wq, *lr.wk,
                            *lr.wv, *lr.wo);
      for (size_t i = 0; i < hidden.size(); ++i) {
        attn[i] += hidden[i];
      }
      hidden = layer_norm(attn, len, d, *lr.ln1_g, *lr.ln1_b);
      dvec f = linear(relu(linear(hidden, len, d, *lr.ffn1_w, ffn, lr.ffn1_b)),
                      len, ffn, *lr.ffn2_w, d, lr.ffn2_b);
      for (size_t i = 0; i < hidden.size(); ++i) {
        f[i] += hidden[i];
      }
      hidden = layer_norm(f, len, d, *lr.ln2_g, *lr.ln2_b);
    }
    const dvec mean = mean_rows(hidden, len, d, len);
    std::copy_n(mean.data(), static_cast<size_t>(d),
                pooled.data() + static_cast<size_t>(s) * d);
  }
  const dvec logits = linear(pooled, n, d, head_w, spec.head_units, &head_b);
  return softmax_cross_entropy(logits, n, spec.head_units, targets);
}

std::vector<std::complex<double>> naive_dft(const dvec& x) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t j = 0; j < n; ++j) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) *
                           static_cast<double>(j) / static_cast<double>(n);
      acc += x[j] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

dvec dct2_ortho(const dvec& frame, int n_coeffs) {
  const int n = static_cast<int>(frame.size());
  dvec out(static_cast<size_t>(n_coeffs));
  for (int k = 0; k < n_coeffs; ++k) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      acc += frame[static_cast<size_t>(j)] *
             std::cos(std::numbers::pi / n * (j + 0.5) * k);
    }
    const double norm = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    out[static_cast<size_t>(k)] = acc * norm;
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

}  // namespace refops
