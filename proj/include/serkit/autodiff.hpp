#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "serkit/matrix.hpp"
#include "serkit/prng.hpp"

namespace ser {

enum class Mode {
  kTrain,
  kEval,
};

namespace detail {

// One vertex of the computation graph. Tensors are thin handles onto these;
// ops wire parents and a backward closure. Values are float32, all gradient
// math inside the closures runs in double where it accumulates.
struct Node {
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;  // allocated lazily by ensure_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) {
      grad.assign(value.size(), 0.0f);
    }
  }
};

}  // namespace detail

// Shared handle to a graph node. Copying a Tensor aliases the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<float> data,
                          bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  int rank() const;
  int dim(int i) const;
  int64_t numel() const;
  bool requires_grad() const;

  std::span<float> values();
  std::span<const float> values() const;
  float item() const;  // scalar tensors only

  // Gradient of the last backward() pass; empty span if none was computed.
  std::span<const float> grad() const;
  void zero_grad();

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_tensor(std::shared_ptr<detail::Node> node);
};

// Reverse-mode sweep from a scalar loss. Topologically orders the graph,
// seeds d(loss)/d(loss) = 1, and runs each node's closure; gradients of
// shared inputs accumulate additively. Non-scalar loss raises ShapeError.
void backward(const Tensor& loss);

// ---- ops ----
// Every op checks shapes up front (ShapeError) and scans its freshly
// computed output for NaN/Inf (NumericError naming the op) so a numerical
// blow-up surfaces at the op that produced it, not epochs later.

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);
// [M,K] x [N,K]^T -> [M,N]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// y = x W^T + b with x [N,in], W [out,in], b [out]. Pass a default Tensor
// as bias for a bias-free projection.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Row-wise softmax on a 2-D tensor, max-subtracted for stability.
Tensor softmax_rows(const Tensor& x);

// x [N,Cin,H,W], w [Cout,Cin,kh,kw], optional b [Cout], zero padding on both
// sides. With padding = k/2 and odd k this is a same-size convolution
// (cross-correlation, as usual for nets).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int padding);

// Per-channel batch normalization over (N, H, W) of a [N,C,H,W] input.
// Training mode normalizes by the biased batch variance and folds the batch
// statistics into the running buffers as
//   running = (1 - momentum) * running + momentum * batch
// using the unbiased variance for the running update. Eval mode normalizes
// by the running statistics and leaves them untouched. Training on a batch
// with N*H*W < 2 raises InputError.
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    std::vector<float>& running_mean,
                    std::vector<float>& running_var, Mode mode,
                    float momentum = 0.1f, float eps = 1e-5f);

// 2x2 mean pooling with stride 2 on [N,C,H,W]. Odd extents are handled by
// replicating the last row/column, so output extents are ceil(H/2), ceil(W/2).
Tensor avg_pool2d(const Tensor& x);

// [N,C,H,W] -> [N,C], mean over the spatial plane.
Tensor global_avg_pool(const Tensor& x);

// Layer norm over the last axis with learned gain and bias of that width.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);

// Identity in eval mode. In training mode zeroes each element with
// probability p and scales survivors by 1/(1-p); the mask is drawn from rng,
// which must be non-null then.
Tensor dropout(const Tensor& x, float p, Mode mode, Prng* rng);

// Scaled dot-product attention over x [T,d] with n_heads heads, projections
// wq/wk/wv/wo all [d,d] and bias-free. Composed entirely from the primitive
// ops above, so its gradient needs no dedicated closure. No causal mask;
// every position attends to every other.
Tensor multi_head_attention(const Tensor& x, int n_heads, const Tensor& wq,
                            const Tensor& wk, const Tensor& wv,
                            const Tensor& wo);

// Mean cross entropy between logits [N,K] and integer targets, computed via
// a max-subtracted log-sum-exp. Returns a scalar.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// Columns [c0, c1) of a 2-D tensor.
Tensor col_slice(const Tensor& x, int c0, int c1);
// Rows [r0, r1) of a 2-D tensor.
Tensor row_slice(const Tensor& x, int r0, int r1);
// Concatenate 2-D tensors with equal row counts along columns.
Tensor col_concat(const std::vector<Tensor>& parts);
// x [N, ...] -> the index-th slab with the leading axis dropped.
Tensor select_plane(const Tensor& x, int index);
// n tensors of identical shape [..] -> [n, ..].
Tensor stack_rows(const std::vector<Tensor>& rows);
// Mean over the first n_rows rows of a 2-D tensor -> [cols].
Tensor mean_rows(const Tensor& x, int n_rows);
// Sum of |pred - target| over the rows where row_mask is nonzero -> scalar.
// target is a constant, only pred receives gradient.
Tensor masked_abs_sum(const Tensor& pred, const Matrix& target,
                      const std::vector<uint8_t>& row_mask);
// Sum of all elements -> scalar.
Tensor sum(const Tensor& x);
// Sum of x * w with constant weights -> scalar. Handy for probing gradients.
Tensor weighted_sum(const Tensor& x, std::span<const float> w);

}  // namespace ser
