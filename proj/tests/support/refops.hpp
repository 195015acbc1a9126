#pragma once

#include <complex>
#include <vector>

// Double-precision reference implementations written against the math
// itself, sharing no code with the library. Everything takes flat row-major
// buffers plus explicit dimensions so the test can feed exactly the numbers
// the implementation saw.
namespace refops {

using dvec = std::vector<double>;

dvec relu(const dvec& x);
dvec sigmoid(const dvec& x);

// [m,k] * [k,n]
dvec matmul(const dvec& a, int m, int k, const dvec& b, int n);
// [m,k] * [n,k]^T
dvec matmul_nt(const dvec& a, int m, int k, const dvec& b, int n);
// y = x W^T + b, x [n,in], w [out,in]; pass nullptr for no bias.
dvec linear(const dvec& x, int n, int in, const dvec& w, int out, const dvec* b);

dvec softmax_rows(const dvec& x, int rows, int cols);
dvec layer_norm(const dvec& x, int rows, int d, const dvec& gamma,
                const dvec& beta, double eps = 1e-5);

// x [n,c_in,h,w], weight [c_out,c_in,kh,kw], zero padding, stride 1.
dvec conv2d(const dvec& x, int n, int c_in, int h, int w, const dvec& weight,
            int c_out, int kh, int kw, const dvec* bias, int pad);

// Biased batch variance, per channel over (n, h, w).
dvec batch_norm_train(const dvec& x, int n, int c, int h, int w,
                      const dvec& gamma, const dvec& beta, double eps = 1e-5);
dvec batch_norm_eval(const dvec& x, int n, int c, int h, int w,
                     const dvec& gamma, const dvec& beta, const dvec& mean,
                     const dvec& var, double eps = 1e-5);

// 2x2 stride-2 mean pooling with edge replication; writes ceil-divided
// output extents to oh / ow.
dvec avg_pool2d(const dvec& x, int n, int c, int h, int w, int* oh, int* ow);
dvec global_avg_pool(const dvec& x, int n, int c, int h, int w);

// Bias-free multi-head self-attention over x [t,d], projections [d,d],
// scores scaled by 1/sqrt(d / n_heads).
dvec attention(const dvec& x, int t, int d, int n_heads, const dvec& wq,
               const dvec& wk, const dvec& wv, const dvec& wo);

// PE[t,2i] = sin(t / 10000^(2i/d)), PE[t,2i+1] = cos of the same angle.
dvec positional_encoding(int t, int d);

double softmax_cross_entropy(const dvec& logits, int n, int k,
                             const std::vector<int>& targets);

// Mean over the first n_rows rows of a [rows,cols] buffer.
dvec mean_rows(const dvec& x, int rows, int cols, int n_rows);

// Full-model forwards for the end-to-end gradient checks. The params vector
// follows the model's own parameters() order.
struct CnnRef {
  int kernel = 5;
  int blocks_per_stage = 1;
  std::vector<int> stage_channels{64, 128, 256, 512};
  int fc_hidden = 512;
  int head_units = 3;
};
double cnn_loss(const CnnRef& spec, const std::vector<dvec>& params,
                const dvec& input, int n, int h, int w,
                const std::vector<int>& targets);

struct TransformerRef {
  int n_layers = 3;
  int d = 128;
  int n_heads = 4;
  int input_dim = 40;
  int head_units = 3;
};
double transformer_loss(const TransformerRef& spec,
                        const std::vector<dvec>& params, const dvec& batch,
                        int n, int t, const std::vector<int>& lengths,
                        const std::vector<int>& targets);

// Signal references.
std::vector<std::complex<double>> naive_dft(const dvec& x);
// Orthonormal DCT-II of one frame, first n_coeffs coefficients.
dvec dct2_ortho(const dvec& frame, int n_coeffs);
double hz_to_mel(double hz);
double mel_to_hz(double mel);

}  // namespace refops
