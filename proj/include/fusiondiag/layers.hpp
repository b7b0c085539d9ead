#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "fusiondiag/tensor.hpp"

namespace fdiag {

// ---------------------------------------------------------------------------
// Conv1D: valid padding, stride 1, cross-correlation (no kernel flip).
//   y[t,o] = bias[o] + sum_{k,c} x[t+k,c] * kernels[k,c,o]
// ---------------------------------------------------------------------------
struct Conv1DLayer {
  Tensor kernels;  // [kernel_size, in_channels, out_channels]
  Tensor bias;     // [out_channels]

  std::size_t kernel_size() const { return kernels.dim(0); }
  std::size_t in_channels() const { return kernels.dim(1); }
  std::size_t out_channels() const { return kernels.dim(2); }
};

struct Conv1DCache {
  Tensor input;
};

struct Conv1DGrads {
  Tensor input;
  Tensor kernels;
  Tensor bias;
};

std::pair<Tensor, Conv1DCache> conv1d_forward(const Conv1DLayer& layer, const Tensor& x);
Conv1DGrads conv1d_backward(const Conv1DLayer& layer, const Conv1DCache& cache,
                            const Tensor& grad_out);

// ---------------------------------------------------------------------------
// MaxPool1D with stride == pool_size. A trailing remainder shorter than the
// pool is dropped; ties go to the lowest index.
// ---------------------------------------------------------------------------
struct MaxPoolLayer {
  std::size_t pool_size = 2;
};

struct MaxPoolCache {
  Shape input_shape;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

std::pair<Tensor, MaxPoolCache> maxpool1d_forward(const MaxPoolLayer& layer, const Tensor& x);
Tensor maxpool1d_backward(const MaxPoolLayer& layer, const MaxPoolCache& cache,
                          const Tensor& grad_out);

// ---------------------------------------------------------------------------
// ReLU. The derivative at exactly zero is taken as zero.
// ---------------------------------------------------------------------------
struct ReluLayer {};

struct ReluCache {
  Tensor input;
};

Tensor relu(const Tensor& x);
std::pair<Tensor, ReluCache> relu_forward(const Tensor& x);
Tensor relu_backward(const ReluCache& cache, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Dense: y = x . W + b on a rank-1 input.
// ---------------------------------------------------------------------------
struct DenseLayer {
  Tensor weights;  // [in_dim, out_dim]
  Tensor bias;     // [out_dim]

  std::size_t in_dim() const { return weights.dim(0); }
  std::size_t out_dim() const { return weights.dim(1); }
};

struct DenseCache {
  Tensor input;
};

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

std::pair<Tensor, DenseCache> dense_forward(const DenseLayer& layer, const Tensor& x);
DenseGrads dense_backward(const DenseLayer& layer, const DenseCache& cache,
                          const Tensor& grad_out);

// Numerically stable softmax over a rank-1 tensor of at least two logits.
Tensor softmax(const Tensor& logits);

// ---------------------------------------------------------------------------
// LSTM with zero initial state. Gate blocks are laid out (i, f, g, o) along
// the 4*units axis of every kernel and of the bias:
//   z_t = x_t . W + h_{t-1} . U + b
//   i,f,o = sigmoid(z), g = tanh(z)
//   c_t = f * c_{t-1} + i * g
//   h_t = o * tanh(c_t)
// ---------------------------------------------------------------------------
struct LstmLayer {
  Tensor input_kernel;      // W: [in_channels, 4*units]
  Tensor recurrent_kernel;  // U: [units, 4*units]
  Tensor bias;              // b: [4*units]

  std::size_t units() const { return recurrent_kernel.dim(0); }
  std::size_t in_channels() const { return input_kernel.dim(0); }
};

struct LstmCache {
  Tensor input;
  bool return_sequences = true;
  // Row-major per timestep.
  std::vector<double> gates;      // [T, 4*units], post-activation
  std::vector<double> cells;      // [T, units]
  std::vector<double> cell_tanh;  // [T, units]
  std::vector<double> hidden;     // [T, units]
};

struct LstmGrads {
  Tensor input;
  Tensor input_kernel;
  Tensor recurrent_kernel;
  Tensor bias;
};

// Returns [T, units] when return_sequences, else the final state [units].
std::pair<Tensor, LstmCache> lstm_forward(const LstmLayer& layer, const Tensor& x,
                                          bool return_sequences);
LstmGrads lstm_backward(const LstmLayer& layer, const LstmCache& cache, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Shape plumbing.
// ---------------------------------------------------------------------------
struct FlattenLayer {};

// Row-major flatten to rank 1.
Tensor flatten(const Tensor& x);
// Branch merge: [a..., b...].
Tensor concat(const Tensor& a, const Tensor& b);

}  // namespace fdiag
