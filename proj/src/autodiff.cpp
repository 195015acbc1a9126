#include "serkit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>

#include "serkit/errors.hpp"

namespace ser {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) {
      s += ",";
    }
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void check_finite(const char* op, const std::vector<float>& values) {
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
}

NodePtr make_node(std::vector<int> shape) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value.resize(static_cast<size_t>(shape_numel(node->shape)));
  return node;
}

// Wires parents and the closure only when a parent actually tracks
// gradients; eval-mode forwards build no graph and hold no memory.
void attach(const NodePtr& out, std::vector<NodePtr> parents,
            std::function<void(Node&)> backward_fn) {
  bool needs = false;
  for (const auto& p : parents) {
    needs = needs || p->requires_grad;
  }
  if (!needs) {
    return;
  }
  out->requires_grad = true;
  out->parents = std::move(parents);
  out->backward_fn = std::move(backward_fn);
}

// ---- dense kernels ----
// C[M,N] (+)= A[M,K] * B[K,N]
void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<size_t>(i) * n;
    if (!accumulate) {
      std::fill(crow, crow + n, 0.0f);
    }
    const float* arow = a + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const float av = arow[kk];
      if (av == 0.0f) {
        continue;
      }
      const float* brow = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

// C[M,N] (+)= A[M,K] * B[N,K]^T
void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<size_t>(i) * k;
    float* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* brow = b + static_cast<size_t>(j) * k;
      float acc = 0.0f;
      for (int kk = 0; kk < k; ++kk) {
        acc += arow[kk] * brow[kk];
      }
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

// C[M,N] (+)= A[K,M]^T * B[K,N]
void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c,
             bool accumulate) {
  if (!accumulate) {
    std::fill(c, c + static_cast<size_t>(m) * n, 0.0f);
  }
  for (int kk = 0; kk < k; ++kk) {
    const float* arow = a + static_cast<size_t>(kk) * m;
    const float* brow = b + static_cast<size_t>(kk) * n;
    for (int i = 0; i < m; ++i) {
      const float av = arow[i];
      if (av == 0.0f) {
        continue;
      }
      float* crow = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

void require(bool cond, const std::string& msg) {
  if (!cond) {
    throw ShapeError(msg);
  }
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw InputError(std::string(op) + ": undefined tensor argument");
  }
}

}  // namespace

Tensor make_tensor(NodePtr node) {
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  for (int d : shape) {
    if (d < 0) {
      throw InputError("Tensor: negative dimension");
    }
  }
  auto node = make_node(std::move(shape));
  node->requires_grad = requires_grad;
  return make_tensor(node);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data,
                         bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  if (static_cast<int64_t>(data.size()) != t.numel()) {
    throw ShapeError("Tensor::from_data: " + std::to_string(data.size()) +
                     " values for shape " + shape_str(t.shape()));
  }
  t.node()->value = std::move(data);
  return t;
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const std::vector<int>& Tensor::shape() const {
  return node_->shape;
}

int Tensor::rank() const {
  return static_cast<int>(node_->shape.size());
}

int Tensor::dim(int i) const {
  return node_->shape.at(static_cast<size_t>(i));
}

int64_t Tensor::numel() const {
  return static_cast<int64_t>(node_->value.size());
}

bool Tensor::requires_grad() const {
  return node_->requires_grad;
}

std::span<float> Tensor::values() {
  return {node_->value.data(), node_->value.size()};
}

std::span<const float> Tensor::values() const {
  return {node_->value.data(), node_->value.size()};
}

float Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("Tensor::item on a non-scalar tensor");
  }
  return node_->value[0];
}

std::span<const float> Tensor::grad() const {
  return {node_->grad.data(), node_->grad.size()};
}

void Tensor::zero_grad() {
  node_->grad.assign(node_->value.size(), 0.0f);
}

void backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " +
                     shape_str(loss.shape()));
  }

  // Iterative post-order DFS; the reverse of the order is a valid schedule
  // where every consumer runs before its inputs.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next_parent < top.node->parents.size()) {
      Node* parent = top.node->parents[top.next_parent++].get();
      if (visited.insert(parent).second) {
        stack.push_back({parent, 0});
      }
    } else {
      order.push_back(top.node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
    }
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
  auto na = a.node();
  auto nb = b.node();
  auto out = make_node(na->shape);
  for (size_t i = 0; i < out->value.size(); ++i) {
    out->value[i] = na->value[i] + nb->value[i];
  }
  check_finite("add", out->value);
  attach(out, {na, nb}, [na, nb](Node& o) {
    if (na->requires_grad) {
      na->ensure_grad();
      for (size_t i = 0; i < o.grad.size(); ++i) {
        na->grad[i] += o.grad[i];
      }
    }
    if (nb->requires_grad) {
      nb->ensure_grad();
      for (size_t i = 0; i < o.grad.size(); ++i) {
        nb->grad[i] += o.grad[i];
      }
    }
  });
  return make_tensor(out);
}

Tensor scale(const Tensor& a, float s) {
  require_defined(a, "scale");
  auto na = a.node();
  auto out = make_node(na->shape);
  for (size_t i = 0; i < out->value.size(); ++i) {
    out->value[i] = na->value[i] * s;
  }
  check_finite("scale", out->value);
  attach(out, {na}, [na, s](Node& o) {
    na->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i) {
      na->grad[i] += o.grad[i] * s;
    }
  });
  return make_tensor(out);
}

Tensor relu(const Tensor& x) {
  require_defined(x, "relu");
  auto nx = x.node();
  auto out = make_node(nx->shape);
  for (size_t i = 0; i < out->value.size(); ++i) {
    out->value[i] = nx->value[i] > 0.0f ? nx->value[i] : 0.0f;
  }
  check_finite("relu", out->value);
  attach(out, {nx}, [nx](Node& o) {
    nx->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i) {
      if (o.value[i] > 0.0f) {
        nx->grad[i] += o.grad[i];
      }
    }
  });
  return make_tensor(out);
}

Tensor sigmoid(const Tensor& x) {
  require_defined(x, "sigmoid");
  auto nx = x.node();
  auto out = make_node(nx->shape);
  for (size_t i = 0; i < out->value.size(); ++i) {
    const double v = nx->value[i];
    out->value[i] = static_cast<float>(1.0 / (1.0 + std::exp(-v)));
  }
  check_finite("sigmoid", out->value);
  attach(out, {nx}, [nx](Node& o) {
    nx->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i) {
      const float y = o.value[i];
      nx->grad[i] += o.grad[i] * y * (1.0f - y);
    }
  });
  return make_tensor(out);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: cannot combine " + shape_str(a.shape()) + " with " +
              shape_str(b.shape()));
  auto na = a.node();
  auto nb = b.node();
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = make_node({m, n});
  gemm_nn(m, n, k, na->value.data(), nb->value.data(), out->value.data(), false);
  check_finite("matmul", out->value);
  attach(out, {na, nb}, [na, nb, m, k, n](Node& o) {
    if (na->requires_grad) {
      na->ensure_grad();
      // dA = dC * B^T
      gemm_nt(m, k, n, o.grad.data(), nb->value.data(), na->grad.data(), true);
    }
    if (nb->requires_grad) {
      nb->ensure_grad();
      // dB = A^T * dC
      gemm_tn(k, n, m, na->value.data(), o.grad.data(), nb->grad.data(), true);
    }
  });
  return make_tensor(out);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul_nt");
  require_defined(b, "matmul_nt");
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1),
          "matmul_nt: cannot combine " + shape_str(a.shape()) + " with " +
              shape_str(b.shape()) + " transposed");
  auto na = a.node();
  auto nb = b.node();
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  auto out = make_node({m, n});
  gemm_nt(m, n, k, na->value.data(), nb->value.data(), out->value.data(), false);
  check_finite("matmul_nt", out->value);
  attach(out, {na, nb}, [na, nb, m, k, n](Node& o) {
    if (na->requires_grad) {
      na->ensure_grad();
      // dA = dC * B
      gemm_nn(m, k, n, o.grad.data(), nb->value.data(), na->grad.data(), true);
    }
    if (nb->requires_grad) {
      nb->ensure_grad();
      // dB = dC^T * A
      gemm_tn(n, k, m, o.grad.data(), na->value.data(), nb->grad.data(), true);
    }
  });
  return make_tensor(out);
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_defined(x, "linear");
  require_defined(weight, "linear");
  require(x.rank() == 2 && weight.rank() == 2 && x.dim(1) == weight.dim(1),
          "linear: input " + shape_str(x.shape()) + " does not match weight " +
              shape_str(weight.shape()));
  auto nx = x.node();
  auto nw = weight.node();
  const int n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  auto out = make_node({n, out_dim});
  gemm_nt(n, out_dim, in, nx->value.data(), nw->value.data(), out->value.data(),
          false);

  NodePtr nb;
  if (bias.defined()) {
    require(bias.rank() == 1 && bias.dim(0) == out_dim,
            "linear: bias " + shape_str(bias.shape()) + " does not match " +
                std::to_string(out_dim) + " outputs");
    nb = bias.node();
    for (int i = 0; i < n; ++i) {
      float* row = out->value.data() + static_cast<size_t>(i) * out_dim;
      for (int j = 0; j < out_dim; ++j) {
        row[j] += nb->value[j];
      }
    }
  }
  check_finite("linear", out->value);

  std::vector<NodePtr> parents = {nx, nw};
  if (nb) {
    parents.push_back(nb);
  }
  attach(out, std::move(parents), [nx, nw, nb, n, in, out_dim](Node& o) {
    if (nx->requires_grad) {
      nx->ensure_grad();
      // dX = dY * W
      gemm_nn(n, in, out_dim, o.grad.data(), nw->value.data(), nx->grad.data(),
              true);
    }
    if (nw->requires_grad) {
      nw->ensure_grad();
      // dW = dY^T * X
      gemm_tn(out_dim, in, n, o.grad.data(), nx->value.data(), nw->grad.data(),
              true);
    }
    if (nb && nb->requires_grad) {
      nb->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const float* row = o.grad.data() + static_cast<size_t>(i) * out_dim;
        for (int j = 0; j < out_dim; ++j) {
          nb->grad[j] += row[j];
        }
      }
    }
  });
  return make_tensor(out);
}

Tensor softmax_rows(const Tensor& x) {
  require_defined(x, "softmax_rows");
  require(x.rank() == 2, "softmax_rows: expected a 2-D tensor, got " +
                             shape_str(x.shape()));
  auto nx = x.node();
  const int rows = x.dim(0), cols = x.dim(1);
  auto out = make_node({rows, cols});
  for (int i = 0; i < rows; ++i) {
    const float* in = nx->value.data() + static_cast<size_t>(i) * cols;
    float* o = out->value.data() + static_cast<size_t>(i) * cols;
    double mx = in[0];
    for (int j = 1; j < cols; ++j) {
      mx = std::max(mx, static_cast<double>(in[j]));
    }
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double e = std::exp(in[j] - mx);
      o[j] = static_cast<float>(e);
      sum += e;
    }
    for (int j = 0; j < cols; ++j) {
      o[j] = static_cast<float>(o[j] / sum);
    }
  }
  check_finite("softmax_rows", out->value);
  attach(out, {nx}, [nx, rows, cols](Node& o) {
    nx->ensure_grad();
    for (int i = 0; i < rows; ++i) {
      const float* y = o.value.data() + static_cast<size_t>(i) * cols;
      const float* dy = o.grad.data() + static_cast<size_t>(i) * cols;
      float* dx = nx->grad.data() + static_cast<size_t>(i) * cols;
      double dot = 0.0;
      for (int j = 0; j < cols; ++j) {
        dot += static_cast<double>(y[j]) * dy[j];
      }
      for (int j = 0; j < cols; ++j) {
        dx[j] += static_cast<float>(y[j] * (dy[j] - dot));
      }
    }
  });
  return make_tensor(out);
}

namespace {

// Scatters x[n] into the patch matrix: row (c*kh+u)*kw+v, column i*wo+j
// holds x[n, c, i+u-pad, j+v-pad], zero outside the image. The same routine
// serves forward and backward, which recomputes it instead of caching
// per-sample patch matrices across the whole batch.
void im2col(const float* x, int channels, int h, int w, int kh, int kw, int pad,
            int ho, int wo, float* cols) {
  for (int c = 0; c < channels; ++c) {
    const float* plane = x + static_cast<size_t>(c) * h * w;
    for (int u = 0; u < kh; ++u) {
      for (int v = 0; v < kw; ++v) {
        float* crow = cols + (static_cast<size_t>(c) * kh * kw +
                              static_cast<size_t>(u) * kw + v) *
                                 ho * wo;
        for (int i = 0; i < ho; ++i) {
          const int src_i = i + u - pad;
          float* dst = crow + static_cast<size_t>(i) * wo;
          if (src_i < 0 || src_i >= h) {
            std::fill(dst, dst + wo, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<size_t>(src_i) * w;
          for (int j = 0; j < wo; ++j) {
            const int src_j = j + v - pad;
            dst[j] = (src_j < 0 || src_j >= w) ? 0.0f : src[src_j];
          }
        }
      }
    }
  }
}

void col2im_add(const float* cols, int channels, int h, int w, int kh, int kw,
                int pad, int ho, int wo, float* dx) {
  for (int c = 0; c < channels; ++c) {
    float* plane = dx + static_cast<size_t>(c) * h * w;
    for (int u = 0; u < kh; ++u) {
      for (int v = 0; v < kw; ++v) {
        const float* crow = cols + (static_cast<size_t>(c) * kh * kw +
                                    static_cast<size_t>(u) * kw + v) *
                                       ho * wo;
        for (int i = 0; i < ho; ++i) {
          const int dst_i = i + u - pad;
          if (dst_i < 0 || dst_i >= h) {
            continue;
          }
          float* dst = plane + static_cast<size_t>(dst_i) * w;
          const float* src = crow + static_cast<size_t>(i) * wo;
          for (int j = 0; j < wo; ++j) {
            const int dst_j = j + v - pad;
            if (dst_j >= 0 && dst_j < w) {
              dst[dst_j] += src[j];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int padding) {
  require_defined(x, "conv2d");
  require_defined(weight, "conv2d");
  require(x.rank() == 4, "conv2d: input must be [N,C,H,W], got " +
                             shape_str(x.shape()));
  require(weight.rank() == 4, "conv2d: weight must be [K,C,kh,kw], got " +
                                  shape_str(weight.shape()));
  require(x.dim(1) == weight.dim(1),
          "conv2d: input has " + std::to_string(x.dim(1)) +
              " channels, weight expects " + std::to_string(weight.dim(1)));
  if (padding < 0) {
    throw InputError("conv2d: negative padding");
  }

  const int batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int k_out = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const int ho = h + 2 * padding - kh + 1;
  const int wo = w + 2 * padding - kw + 1;
  require(ho > 0 && wo > 0, "conv2d: kernel " + std::to_string(kh) + "x" +
                                std::to_string(kw) + " too large for input " +
                                shape_str(x.shape()) + " with padding " +
                                std::to_string(padding));

  auto nx = x.node();
  auto nw = weight.node();
  NodePtr nb;
  if (bias.defined()) {
    require(bias.rank() == 1 && bias.dim(0) == k_out,
            "conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                std::to_string(k_out) + " output channels");
    nb = bias.node();
  }

  const int ckk = channels * kh * kw;
  const int hw = ho * wo;
  auto out = make_node({batch, k_out, ho, wo});
  std::vector<float> cols(static_cast<size_t>(ckk) * hw);
  for (int n = 0; n < batch; ++n) {
    const float* xn = nx->value.data() + static_cast<size_t>(n) * channels * h * w;
    im2col(xn, channels, h, w, kh, kw, padding, ho, wo, cols.data());
    float* yn = out->value.data() + static_cast<size_t>(n) * k_out * hw;
    gemm_nn(k_out, hw, ckk, nw->value.data(), cols.data(), yn, false);
    if (nb) {
      for (int k = 0; k < k_out; ++k) {
        float* plane = yn + static_cast<size_t>(k) * hw;
        const float b = nb->value[k];
        for (int i = 0; i < hw; ++i) {
          plane[i] += b;
        }
      }
    }
  }
  check_finite("conv2d", out->value);

  std::vector<NodePtr> parents = {nx, nw};
  if (nb) {
    parents.push_back(nb);
  }
  attach(out, std::move(parents),
         [nx, nw, nb, batch, channels, h, w, k_out, kh, kw, padding, ho,
          wo](Node& o) {
           const int ckk2 = channels * kh * kw;
           const int hw2 = ho * wo;
           std::vector<float> cols2(static_cast<size_t>(ckk2) * hw2);
           std::vector<float> dcols(static_cast<size_t>(ckk2) * hw2);
           if (nw->requires_grad) {
             nw->ensure_grad();
           }
           if (nx->requires_grad) {
             nx->ensure_grad();
           }
           if (nb && nb->requires_grad) {
             nb->ensure_grad();
           }
           for (int n = 0; n < batch; ++n) {
             const float* dyn =
                 o.grad.data() + static_cast<size_t>(n) * k_out * hw2;
             if (nb && nb->requires_grad) {
               for (int k = 0; k < k_out; ++k) {
                 const float* plane = dyn + static_cast<size_t>(k) * hw2;
                 double acc = 0.0;
                 for (int i = 0; i < hw2; ++i) {
                   acc += plane[i];
                 }
                 nb->grad[k] += static_cast<float>(acc);
               }
             }
             if (nw->requires_grad || nx->requires_grad) {
               const float* xn =
                   nx->value.data() + static_cast<size_t>(n) * channels * h * w;
               im2col(xn, channels, h, w, kh, kw, padding, ho, wo, cols2.data());
               if (nw->requires_grad) {
                 // dW = dY * cols^T, accumulated over the batch.
                 gemm_nt(k_out, ckk2, hw2, dyn, cols2.data(), nw->grad.data(),
                         true);
               }
               if (nx->requires_grad) {
                 // dcols = W^T * dY, then scatter back into the image.
                 gemm_tn(ckk2, hw2, k_out, nw->value.data(), dyn, dcols.data(),
                         false);
                 float* dxn =
                     nx->grad.data() + static_cast<size_t>(n) * channels * h * w;
                 col2im_add(dcols.data(), channels, h, w, kh, kw, padding, ho,
                            wo, dxn);
               }
             }
           }
         });
  return make_tensor(out);
}

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    std::vector<float>& running_mean,
                    std::vector<float>& running_var, Mode mode, float momentum,
                    float eps) {
  require_defined(x, "batch_norm2d");
  require_defined(gamma, "batch_norm2d");
  require_defined(beta, "batch_norm2d");
  require(x.rank() == 4, "batch_norm2d: input must be [N,C,H,W], got " +
                             shape_str(x.shape()));
  const int batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(gamma.rank() == 1 && gamma.dim(0) == channels &&
              beta.rank() == 1 && beta.dim(0) == channels,
          "batch_norm2d: gamma/beta must be [" + std::to_string(channels) + "]");
  if (static_cast<int>(running_mean.size()) != channels ||
      static_cast<int>(running_var.size()) != channels) {
    throw ShapeError("batch_norm2d: running buffers must have " +
                     std::to_string(channels) + " entries");
  }

  const int64_t plane = static_cast<int64_t>(h) * w;
  const int64_t m = static_cast<int64_t>(batch) * plane;
  if (mode == Mode::kTrain && m < 2) {
    throw InputError(
        "batch_norm2d: training needs at least 2 values per channel");
  }

  auto nx = x.node();
  auto ng = gamma.node();
  auto nbta = beta.node();
  auto out = make_node(nx->shape);

  // Per-channel mean and inverse stddev actually used for normalization.
  std::vector<float> mean(channels), inv_std(channels);
  if (mode == Mode::kTrain) {
    for (int c = 0; c < channels; ++c) {
      double sum = 0.0, sum_sq = 0.0;
      for (int n = 0; n < batch; ++n) {
        const float* p = nx->value.data() +
                         (static_cast<size_t>(n) * channels + c) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          sum += p[i];
          sum_sq += static_cast<double>(p[i]) * p[i];
        }
      }
      const double mu = sum / static_cast<double>(m);
      const double var_b = std::max(0.0, sum_sq / static_cast<double>(m) - mu * mu);
      mean[c] = static_cast<float>(mu);
      inv_std[c] = static_cast<float>(1.0 / std::sqrt(var_b + eps));
      const double var_u = var_b * static_cast<double>(m) / (m - 1);
      running_mean[c] = static_cast<float>((1.0 - momentum) * running_mean[c] +
                                           momentum * mu);
      running_var[c] = static_cast<float>((1.0 - momentum) * running_var[c] +
                                          momentum * var_u);
    }
  } else {
    for (int c = 0; c < channels; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = static_cast<float>(
          1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps));
    }
  }

  for (int n = 0; n < batch; ++n) {
    for (int c = 0; c < channels; ++c) {
      const float* p =
          nx->value.data() + (static_cast<size_t>(n) * channels + c) * plane;
      float* q = out->value.data() + (static_cast<size_t>(n) * channels + c) * plane;
      const float mu = mean[c], is = inv_std[c];
      const float g = ng->value[c], b = nbta->value[c];
      for (int64_t i = 0; i < plane; ++i) {
        q[i] = (p[i] - mu) * is * g + b;
      }
    }
  }
  check_finite("batch_norm2d", out->value);

  const bool train = mode == Mode::kTrain;
  attach(out, {nx, ng, nbta},
         [nx, ng, nbta, mean, inv_std, batch, channels, plane, m,
          train](Node& o) {
           ng->ensure_grad();
           nbta->ensure_grad();
           if (nx->requires_grad) {
             nx->ensure_grad();
           }
           for (int c = 0; c < channels; ++c) {
             const float mu = mean[c], is = inv_std[c];
             double sum_dy = 0.0, sum_dy_xhat = 0.0;
             for (int n = 0; n < batch; ++n) {
               const size_t base = (static_cast<size_t>(n) * channels + c) * plane;
               const float* p = nx->value.data() + base;
               const float* dy = o.grad.data() + base;
               for (int64_t i = 0; i < plane; ++i) {
                 sum_dy += dy[i];
                 sum_dy_xhat += static_cast<double>(dy[i]) * (p[i] - mu) * is;
               }
             }
             ng->grad[c] += static_cast<float>(sum_dy_xhat);
             nbta->grad[c] += static_cast<float>(sum_dy);
             if (!nx->requires_grad) {
               continue;
             }
             const double g = ng->value[c];
             if (train) {
               // Batch statistics depend on x, hence the two correction terms.
               const double inv_m = 1.0 / static_cast<double>(m);
               for (int n = 0; n < batch; ++n) {
                 const size_t base =
                     (static_cast<size_t>(n) * channels + c) * plane;
                 const float* p = nx->value.data() + base;
                 const float* dy = o.grad.data() + base;
                 float* dx = nx->grad.data() + base;
                 for (int64_t i = 0; i < plane; ++i) {
                   const double xhat = (p[i] - mu) * is;
                   dx[i] += static_cast<float>(
                       g * is * (dy[i] - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat));
                 }
               }
             } else {
               for (int n = 0; n < batch; ++n) {
                 const size_t base =
                     (static_cast<size_t>(n) * channels + c) * plane;
                 const float* dy = o.grad.data() + base;
                 float* dx = nx->grad.data() + base;
                 for (int64_t i = 0; i < plane; ++i) {
                   dx[i] += static_cast<float>(g * is * dy[i]);
                 }
               }
             }
           }
         });
  return make_tensor(out);
}

Tensor avg_pool2d(const Tensor& x) {
  require_defined(x, "avg_pool2d");
  require(x.rank() == 4, "avg_pool2d: input must be [N,C,H,W], got " +
                             shape_str(x.shape()));
  const int batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = (h + 1) / 2, wo = (w + 1) / 2;
  auto nx = x.node();
  auto out = make_node({batch, channels, ho, wo});
  // Odd extents replicate the edge row/column: the window reads clamped
  // indices, so a corner cell may read the same sample up to four times.
  for (int nc = 0; nc < batch * channels; ++nc) {
    const float* p = nx->value.data() + static_cast<size_t>(nc) * h * w;
    float* q = out->value.data() + static_cast<size_t>(nc) * ho * wo;
    for (int i = 0; i < ho; ++i) {
      const int i0 = 2 * i, i1 = std::min(2 * i + 1, h - 1);
      for (int j = 0; j < wo; ++j) {
        const int j0 = 2 * j, j1 = std::min(2 * j + 1, w - 1);
        q[static_cast<size_t>(i) * wo + j] =
            0.25f * (p[static_cast<size_t>(i0) * w + j0] +
                     p[static_cast<size_t>(i0) * w + j1] +
                     p[static_cast<size_t>(i1) * w + j0] +
                     p[static_cast<size_t>(i1) * w + j1]);
      }
    }
  }
  check_finite("avg_pool2d", out->value);
  attach(out, {nx}, [nx, batch, channels, h, w, ho, wo](Node& o) {
    nx->ensure_grad();
    for (int nc = 0; nc < batch * channels; ++nc) {
      float* dx = nx->grad.data() + static_cast<size_t>(nc) * h * w;
      const float* dy = o.grad.data() + static_cast<size_t>(nc) * ho * wo;
      for (int i = 0; i < ho; ++i) {
        const int i0 = 2 * i, i1 = std::min(2 * i + 1, h - 1);
        for (int j = 0; j < wo; ++j) {
          const int j0 = 2 * j, j1 = std::min(2 * j + 1, w - 1);
          const float g = 0.25f * dy[static_cast<size_t>(i) * wo + j];
          dx[static_cast<size_t>(i0) * w + j0] += g;
          dx[static_cast<size_t>(i0) * w + j1] += g;
          dx[static_cast<size_t>(i1) * w + j0] += g;
          dx[static_cast<size_t>(i1) * w + j1] += g;
        }
      }
    }
  });
  return make_tensor(out);
}

Tensor global_avg_pool(const Tensor& x) {
  require_defined(x, "global_avg_pool");
  require(x.rank() == 4, "global_avg_pool: input must be [N,C,H,W], got " +
                             shape_str(x.shape()));
  const int batch = x.dim(0), channels = x.dim(1);
  const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  auto nx = x.node();
  auto out = make_node({batch, channels});
  for (int nc = 0; nc < batch * channels; ++nc) {
    const float* p = nx->value.data() + static_cast<size_t>(nc) * plane;
    double acc = 0.0;
    for (int64_t i = 0; i < plane; ++i) {
      acc += p[i];
    }
    out->value[nc] = static_cast<float>(acc / static_cast<double>(plane));
  }
  check_finite("global_avg_pool", out->value);
  attach(out, {nx}, [nx, batch, channels, plane](Node& o) {
    nx->ensure_grad();
    for (int nc = 0; nc < batch * channels; ++nc) {
      const float g = o.grad[nc] / static_cast<float>(plane);
      float* dx = nx->grad.data() + static_cast<size_t>(nc) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        dx[i] += g;
      }
    }
  });
  return make_tensor(out);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps) {
  require_defined(x, "layer_norm");
  require_defined(gamma, "layer_norm");
  require_defined(beta, "layer_norm");
  require(x.rank() >= 1, "layer_norm: scalar input");
  const int d = x.dim(x.rank() - 1);
  require(gamma.rank() == 1 && gamma.dim(0) == d && beta.rank() == 1 &&
              beta.dim(0) == d,
          "layer_norm: gamma/beta must be [" + std::to_string(d) + "]");
  const int64_t rows = x.numel() / d;

  auto nx = x.node();
  auto ng = gamma.node();
  auto nbta = beta.node();
  auto out = make_node(nx->shape);

  std::vector<float> inv_std(static_cast<size_t>(rows)), mean(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const float* p = nx->value.data() + static_cast<size_t>(r) * d;
    double sum = 0.0, sum_sq = 0.0;
    for (int j = 0; j < d; ++j) {
      sum += p[j];
      sum_sq += static_cast<double>(p[j]) * p[j];
    }
    const double mu = sum / d;
    const double var = std::max(0.0, sum_sq / d - mu * mu);
    mean[static_cast<size_t>(r)] = static_cast<float>(mu);
    inv_std[static_cast<size_t>(r)] = static_cast<float>(1.0 / std::sqrt(var + eps));
    float* q = out->value.data() + static_cast<size_t>(r) * d;
    for (int j = 0; j < d; ++j) {
      q[j] = static_cast<float>((p[j] - mu) * inv_std[static_cast<size_t>(r)] *
                                    ng->value[j] +
                                nbta->value[j]);
    }
  }
  check_finite("layer_norm", out->value);

  attach(out, {nx, ng, nbta}, [nx, ng, nbta, mean, inv_std, rows, d](Node& o) {
    ng->ensure_grad();
    nbta->ensure_grad();
    if (nx->requires_grad) {
      nx->ensure_grad();
    }
    for (int64_t r = 0; r < rows; ++r) {
      const float* p = nx->value.data() + static_cast<size_t>(r) * d;
      const float* dy = o.grad.data() + static_cast<size_t>(r) * d;
      const float mu = mean[static_cast<size_t>(r)];
      const float is = inv_std[static_cast<size_t>(r)];
      double s1 = 0.0, s2 = 0.0;
      for (int j = 0; j < d; ++j) {
        const double xhat = (p[j] - mu) * is;
        const double g = static_cast<double>(dy[j]) * ng->value[j];
        s1 += g;
        s2 += g * xhat;
        ng->grad[j] += static_cast<float>(dy[j] * xhat);
        nbta->grad[j] += dy[j];
      }
      if (!nx->requires_grad) {
        continue;
      }
      float* dx = nx->grad.data() + static_cast<size_t>(r) * d;
      for (int j = 0; j < d; ++j) {
        const double xhat = (p[j] - mu) * is;
        const double g = static_cast<double>(dy[j]) * ng->value[j];
        dx[j] += static_cast<float>(is * (g - (s1 + xhat * s2) / d));
      }
    }
  });
  return make_tensor(out);
}

Tensor dropout(const Tensor& x, float p, Mode mode, Prng* rng) {
  require_defined(x, "dropout");
  if (p < 0.0f || p >= 1.0f) {
    throw InputError("dropout: p must be in [0, 1)");
  }
  if (mode == Mode::kEval) {
    return x;
  }
  if (rng == nullptr) {
    throw InputError("dropout: training mode needs a generator");
  }
  auto nx = x.node();
  auto out = make_node(nx->shape);
  // One uniform draw per element, in storage order, regardless of p.
  auto mask = std::make_shared<std::vector<uint8_t>>(nx->value.size());
  const float inv_keep = 1.0f / (1.0f - p);
  for (size_t i = 0; i < out->value.size(); ++i) {
    const bool keep = rng->uniform_double() >= p;
    (*mask)[i] = keep ? 1 : 0;
    out->value[i] = keep ? nx->value[i] * inv_keep : 0.0f;
  }
  check_finite("dropout", out->value);
  attach(out, {nx}, [nx, mask, inv_keep](Node& o) {
    nx->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i) {
      if ((*mask)[i]) {
        nx->grad[i] += o.grad[i] * inv_keep;
      }
    }
  });
  return make_tensor(out);
}

Tensor multi_head_attention(const Tensor& x, int n_heads, const Tensor& wq,
                            const Tensor& wk, const Tensor& wv,
                            const Tensor& wo) {
  require_defined(x, "multi_head_attention");
  require(x.rank() == 2, "multi_head_attention: input must be [T,d], got " +
                             shape_str(x.shape()));
  const int d = x.dim(1);
  require(n_heads > 0 && d % n_heads == 0,
          "multi_head_attention: width " + std::to_string(d) +
              " not divisible by " + std::to_string(n_heads) + " heads");
  for (const Tensor* w : {&wq, &wk, &wv, &wo}) {
    require_defined(*w, "multi_head_attention");
    require(w->rank() == 2 && w->dim(0) == d && w->dim(1) == d,
            "multi_head_attention: projections must be [" + std::to_string(d) +
                "," + std::to_string(d) + "]");
  }
  const int dh = d / n_heads;
  const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));

  const Tensor q = matmul_nt(x, wq);
  const Tensor k = matmul_nt(x, wk);
  const Tensor v = matmul_nt(x, wv);

  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    const Tensor qh = col_slice(q, h * dh, (h + 1) * dh);
    const Tensor kh = col_slice(k, h * dh, (h + 1) * dh);
    const Tensor vh = col_slice(v, h * dh, (h + 1) * dh);
    const Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt_dh);
    heads.push_back(matmul(softmax_rows(scores), vh));
  }
  return matmul_nt(col_concat(heads), wo);
}

Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& targets) {
  require_defined(logits, "softmax_cross_entropy");
  require(logits.rank() == 2, "softmax_cross_entropy: logits must be [N,K]");
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(targets.size()) != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(n) + " rows");
  }
  for (int t : targets) {
    if (t < 0 || t >= k) {
      throw InputError("softmax_cross_entropy: target " + std::to_string(t) +
                       " outside [0, " + std::to_string(k) + ")");
    }
  }

  auto nx = logits.node();
  auto out = make_node({1});
  auto probs = std::make_shared<std::vector<float>>(nx->value.size());
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* row = nx->value.data() + static_cast<size_t>(i) * k;
    float* prow = probs->data() + static_cast<size_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) {
      mx = std::max(mx, static_cast<double>(row[j]));
    }
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      sum += std::exp(row[j] - mx);
    }
    const double log_z = mx + std::log(sum);
    loss += log_z - row[targets[static_cast<size_t>(i)]];
    for (int j = 0; j < k; ++j) {
      prow[j] = static_cast<float>(std::exp(row[j] - log_z));
    }
  }
  out->value[0] = static_cast<float>(loss / n);
  check_finite("softmax_cross_entropy", out->value);

  auto targets_copy = std::make_shared<std::vector<int>>(targets);
  attach(out, {nx}, [nx, probs, targets_copy, n, k](Node& o) {
    nx->ensure_grad();
    const float g = o.grad[0] / static_cast<float>(n);
    for (int i = 0; i < n; ++i) {
      const float* prow = probs->data() + static_cast<size_t>(i) * k;
      float* drow = nx->grad.data() + static_cast<size_t>(i) * k;
      const int t = (*targets_copy)[static_cast<size_t>(i)];
      for (int j = 0; j < k; ++j) {
        drow[j] += g * (prow[j] - (j == t ? 1.0f : 0.0f));
      }
    }
  });
  return make_tensor(out);
}

Tensor col_slice(const Tensor& x, int c0, int c1) {
  require_defined(x, "col_slice");
  require(x.rank() == 2, "col_slice: expected a 2-D tensor");
  const int rows = x.dim(0), cols = x.dim(1);
  if (c0 < 0 || c1 > cols || c0 >= c1) {
    throw InputError("col_slice: range [" + std::to_string(c0) + ", " +
                     std::to_string(c1) + ") outside " + std::to_string(cols) +
                     " columns");
  }
  auto nx = x.node();
  const int width = c1 - c0;
  auto out = make_node({rows, width});
  for (int i = 0; i < rows; ++i) {
    const float* src = nx->value.data() + static_cast<size_t>(i) * cols + c0;
    std::copy(src, src + width, out->value.data() + static_cast<size_t>(i) * width);
  }
  attach(out, {nx}, [nx, rows, cols, c0, width](Node& o) {
    nx->ensure_grad();
    for (int i = 0; i < rows; ++i) {
      const float* dy = o.grad.data() + static_cast<size_t>(i) * width;
      float* dx = nx->grad.data() + static_cast<size_t>(i) * cols + c0;
      for (int j = 0; j < width; ++j) {
        dx[j] += dy[j];
      }
    }
  });
  return make_tensor(out);
}

Tensor row_slice(const Tensor& x, int r0, int r1) {
  require_defined(x, "row_slice");
  require(x.rank() == 2, "row_slice: expected a 2-D tensor");
  const int rows = x.dim(0), cols = x.dim(1);
  if (r0 < 0 || r1 > rows || r0 >= r1) {
    throw InputError("row_slice: range [" + std::to_string(r0) + ", " +
                     std::to_string(r1) + ") outside " + std::to_string(rows) +
                     " rows");
  }
  auto nx = x.node();
  const int height = r1 - r0;
  auto out = make_node({height, cols});
  const float* src = nx->value.data() + static_cast<size_t>(r0) * cols;
  std::copy(src, src + static_cast<size_t>(height) * cols, out->value.data());
  attach(out, {nx}, [nx, cols, r0, height](Node& o) {
    nx->ensure_grad();
    float* dx = nx->grad.data() + static_cast<size_t>(r0) * cols;
    const size_t count = static_cast<size_t>(height) * cols;
    for (size_t j = 0; j < count; ++j) {
      dx[j] += o.grad[j];
    }
  });
  return make_tensor(out);
}

Tensor col_concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) {
    throw InputError("col_concat: no tensors");
  }
  const int rows = parts[0].dim(0);
  int total = 0;
  std::vector<NodePtr> nodes;
  for (const auto& part : parts) {
    require_defined(part, "col_concat");
    require(part.rank() == 2 && part.dim(0) == rows,
            "col_concat: row counts differ");
    total += part.dim(1);
    nodes.push_back(part.node());
  }
  auto out = make_node({rows, total});
  int offset = 0;
  for (const auto& node : nodes) {
    const int width = node->shape[1];
    for (int i = 0; i < rows; ++i) {
      std::copy(node->value.data() + static_cast<size_t>(i) * width,
                node->value.data() + static_cast<size_t>(i) * width + width,
                out->value.data() + static_cast<size_t>(i) * total + offset);
    }
    offset += width;
  }
  attach(out, nodes, [nodes, rows, total](Node& o) {
    int off = 0;
    for (const auto& node : nodes) {
      const int width = node->shape[1];
      if (node->requires_grad) {
        node->ensure_grad();
        for (int i = 0; i < rows; ++i) {
          const float* dy = o.grad.data() + static_cast<size_t>(i) * total + off;
          float* dx = node->grad.data() + static_cast<size_t>(i) * width;
          for (int j = 0; j < width; ++j) {
            dx[j] += dy[j];
          }
        }
      }
      off += width;
    }
  });
  return make_tensor(out);
}

Tensor select_plane(const Tensor& x, int index) {
  require_defined(x, "select_plane");
  require(x.rank() >= 2, "select_plane: need at least 2 axes");
  const int n = x.dim(0);
  if (index < 0 || index >= n) {
    throw InputError("select_plane: index " + std::to_string(index) +
                     " outside [0, " + std::to_string(n) + ")");
  }
  auto nx = x.node();
  std::vector<int> shape(nx->shape.begin() + 1, nx->shape.end());
  auto out = make_node(shape);
  const size_t slab = out->value.size();
  std::copy(nx->value.data() + index * slab, nx->value.data() + (index + 1) * slab,
            out->value.data());
  attach(out, {nx}, [nx, index, slab](Node& o) {
    nx->ensure_grad();
    float* dx = nx->grad.data() + index * slab;
    for (size_t i = 0; i < slab; ++i) {
      dx[i] += o.grad[i];
    }
  });
  return make_tensor(out);
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) {
    throw InputError("stack_rows: no tensors");
  }
  const std::vector<int>& inner = rows[0].shape();
  std::vector<NodePtr> nodes;
  for (const auto& row : rows) {
    require_defined(row, "stack_rows");
    require(row.shape() == inner, "stack_rows: shapes differ");
    nodes.push_back(row.node());
  }
  std::vector<int> shape;
  shape.push_back(static_cast<int>(rows.size()));
  shape.insert(shape.end(), inner.begin(), inner.end());
  auto out = make_node(shape);
  const size_t slab = nodes[0]->value.size();
  for (size_t i = 0; i < nodes.size(); ++i) {
    std::copy(nodes[i]->value.begin(), nodes[i]->value.end(),
              out->value.data() + i * slab);
  }
  attach(out, nodes, [nodes, slab](Node& o) {
    for (size_t i = 0; i < nodes.size(); ++i) {
      if (!nodes[i]->requires_grad) {
        continue;
      }
      nodes[i]->ensure_grad();
      const float* dy = o.grad.data() + i * slab;
      for (size_t j = 0; j < slab; ++j) {
        nodes[i]->grad[j] += dy[j];
      }
    }
  });
  return make_tensor(out);
}

Tensor mean_rows(const Tensor& x, int n_rows) {
  require_defined(x, "mean_rows");
  require(x.rank() == 2, "mean_rows: expected a 2-D tensor");
  const int rows = x.dim(0), cols = x.dim(1);
  if (n_rows < 1 || n_rows > rows) {
    throw InputError("mean_rows: n_rows " + std::to_string(n_rows) +
                     " outside [1, " + std::to_string(rows) + "]");
  }
  auto nx = x.node();
  auto out = make_node({cols});
  for (int j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (int i = 0; i < n_rows; ++i) {
      acc += nx->value[static_cast<size_t>(i) * cols + j];
    }
    out->value[static_cast<size_t>(j)] = static_cast<float>(acc / n_rows);
  }
  check_finite("mean_rows", out->value);
  attach(out, {nx}, [nx, n_rows, cols](Node& o) {
    nx->ensure_grad();
    for (int i = 0; i < n_rows; ++i) {
      float* dx = nx->grad.data() + static_cast<size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) {
        dx[j] += o.grad[static_cast<size_t>(j)] / static_cast<float>(n_rows);
      }
    }
  });
  return make_tensor(out);
}

Tensor masked_abs_sum(const Tensor& pred, const Matrix& target,
                      const std::vector<uint8_t>& row_mask) {
  require_defined(pred, "masked_abs_sum");
  require(pred.rank() == 2, "masked_abs_sum: expected a 2-D tensor");
  const int rows = pred.dim(0), cols = pred.dim(1);
  if (target.rows() != rows || target.cols() != cols) {
    throw ShapeError("masked_abs_sum: target is " + std::to_string(target.rows()) +
                     "x" + std::to_string(target.cols()) + ", prediction is " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (static_cast<int>(row_mask.size()) != rows) {
    throw ShapeError("masked_abs_sum: mask covers " +
                     std::to_string(row_mask.size()) + " of " +
                     std::to_string(rows) + " rows");
  }

  auto nx = pred.node();
  auto out = make_node({1});
  double acc = 0.0;
  for (int i = 0; i < rows; ++i) {
    if (!row_mask[static_cast<size_t>(i)]) {
      continue;
    }
    const float* p = nx->value.data() + static_cast<size_t>(i) * cols;
    const float* t = target.row(i);
    for (int j = 0; j < cols; ++j) {
      acc += std::abs(static_cast<double>(p[j]) - t[j]);
    }
  }
  out->value[0] = static_cast<float>(acc);
  check_finite("masked_abs_sum", out->value);

  auto target_copy = std::make_shared<Matrix>(target);
  auto mask_copy = std::make_shared<std::vector<uint8_t>>(row_mask);
  attach(out, {nx}, [nx, target_copy, mask_copy, rows, cols](Node& o) {
    nx->ensure_grad();
    const float g = o.grad[0];
    for (int i = 0; i < rows; ++i) {
      if (!(*mask_copy)[static_cast<size_t>(i)]) {
        continue;
      }
      const float* p = nx->value.data() + static_cast<size_t>(i) * cols;
      const float* t = target_copy->row(i);
      float* dx = nx->grad.data() + static_cast<size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) {
        const float diff = p[j] - t[j];
        dx[j] += diff > 0.0f ? g : (diff < 0.0f ? -g : 0.0f);
      }
    }
  });
  return make_tensor(out);
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  auto nx = x.node();
  auto out = make_node({1});
  double acc = 0.0;
  for (float v : nx->value) {
    acc += v;
  }
  out->value[0] = static_cast<float>(acc);
  check_finite("sum", out->value);
  attach(out, {nx}, [nx](Node& o) {
    nx->ensure_grad();
    for (auto& g : nx->grad) {
      g += o.grad[0];
    }
  });
  return make_tensor(out);
}

Tensor weighted_sum(const Tensor& x, std::span<const float> w) {
  require_defined(x, "weighted_sum");
  if (static_cast<int64_t>(w.size()) != x.numel()) {
    throw ShapeError("weighted_sum: " + std::to_string(w.size()) +
                     " weights for " + std::to_string(x.numel()) + " elements");
  }
  auto nx = x.node();
  auto out = make_node({1});
  double acc = 0.0;
  for (size_t i = 0; i < nx->value.size(); ++i) {
    acc += static_cast<double>(nx->value[i]) * w[i];
  }
  out->value[0] = static_cast<float>(acc);
  check_finite("weighted_sum", out->value);
  auto weights = std::make_shared<std::vector<float>>(w.begin(), w.end());
  attach(out, {nx}, [nx, weights](Node& o) {
    nx->ensure_grad();
    for (size_t i = 0; i < nx->grad.size(); ++i) {
      nx->grad[i] += o.grad[0] * (*weights)[i];
    }
  });
  return make_tensor(out);
}

}  // namespace ser
