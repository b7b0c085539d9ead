#include "fusiondiag/layers.hpp"

#include <algorithm>
#include <cmath>

#include "fusiondiag/errors.hpp"

namespace fdiag {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

// ----------------------------------------------------------------- Conv1D

std::pair<Tensor, Conv1DCache> conv1d_forward(const Conv1DLayer& layer, const Tensor& x) {
  require(x.rank() == 2 && x.dim(1) == layer.in_channels(),
          "conv1d input " + x.shape_string() + " does not match kernels " +
              layer.kernels.shape_string());
  const std::size_t steps = x.dim(0);
  const std::size_t k_size = layer.kernel_size();
  const std::size_t c_in = layer.in_channels();
  const std::size_t c_out = layer.out_channels();
  if (steps < k_size) {
    throw ShapeError("window shorter than kernel (" + std::to_string(steps) + " < " +
                     std::to_string(k_size) + ")");
  }
  const std::size_t out_steps = steps - k_size + 1;
  Tensor y({out_steps, c_out});
  const double* w = layer.kernels.data();
  const double* b = layer.bias.data();
  for (std::size_t t = 0; t < out_steps; ++t) {
    double* row = y.data() + t * c_out;
    std::copy(b, b + c_out, row);
    // x[t+k, c] for k, c is a contiguous run of k_size*c_in values.
    const double* window = x.data() + t * c_in;
    for (std::size_t kc = 0; kc < k_size * c_in; ++kc) {
      const double xv = window[kc];
      const double* wrow = w + kc * c_out;
      for (std::size_t o = 0; o < c_out; ++o) row[o] += xv * wrow[o];
    }
  }
  return {std::move(y), Conv1DCache{x}};
}

Conv1DGrads conv1d_backward(const Conv1DLayer& layer, const Conv1DCache& cache,
                            const Tensor& grad_out) {
  const Tensor& x = cache.input;
  const std::size_t k_size = layer.kernel_size();
  const std::size_t c_in = layer.in_channels();
  const std::size_t c_out = layer.out_channels();
  require(x.rank() == 2 && x.dim(1) == c_in && x.dim(0) >= k_size,
          "conv1d cache does not match layer");
  const std::size_t out_steps = x.dim(0) - k_size + 1;
  require(grad_out.shape() == Shape{out_steps, c_out},
          "conv1d grad_out " + grad_out.shape_string() + " expected " +
              shape_string({out_steps, c_out}));

  Conv1DGrads grads{Tensor(x.shape()), Tensor(layer.kernels.shape()), Tensor(layer.bias.shape())};
  const double* w = layer.kernels.data();
  double* gw = grads.kernels.data();
  double* gb = grads.bias.data();
  for (std::size_t t = 0; t < out_steps; ++t) {
    const double* g = grad_out.data() + t * c_out;
    for (std::size_t o = 0; o < c_out; ++o) gb[o] += g[o];
    const double* window = x.data() + t * c_in;
    double* gwindow = grads.input.data() + t * c_in;
    for (std::size_t kc = 0; kc < k_size * c_in; ++kc) {
      const double xv = window[kc];
      const double* wrow = w + kc * c_out;
      double* gwrow = gw + kc * c_out;
      double acc = 0.0;
      for (std::size_t o = 0; o < c_out; ++o) {
        gwrow[o] += xv * g[o];
        acc += wrow[o] * g[o];
      }
      gwindow[kc] += acc;
    }
  }
  return grads;
}

// ---------------------------------------------------------------- MaxPool

std::pair<Tensor, MaxPoolCache> maxpool1d_forward(const MaxPoolLayer& layer, const Tensor& x) {
  require(layer.pool_size >= 2, "pool size must be at least 2");
  require(x.rank() == 2, "maxpool expects [time, channels], got " + x.shape_string());
  const std::size_t steps = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t pool = layer.pool_size;
  if (steps < pool) {
    throw ShapeError("maxpool input length " + std::to_string(steps) + " shorter than pool " +
                     std::to_string(pool));
  }
  const std::size_t out_steps = steps / pool;
  Tensor y({out_steps, channels});
  MaxPoolCache cache{x.shape(), std::vector<std::size_t>(out_steps * channels)};
  for (std::size_t t = 0; t < out_steps; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::size_t best = (t * pool) * channels + c;
      for (std::size_t p = 1; p < pool; ++p) {
        const std::size_t idx = (t * pool + p) * channels + c;
        if (x[idx] > x[best]) best = idx;
      }
      y.at(t, c) = x[best];
      cache.argmax[t * channels + c] = best;
    }
  }
  return {std::move(y), std::move(cache)};
}

Tensor maxpool1d_backward(const MaxPoolLayer& layer, const MaxPoolCache& cache,
                          const Tensor& grad_out) {
  require(cache.input_shape.size() == 2, "maxpool cache is empty");
  const Shape expected{cache.input_shape[0] / layer.pool_size, cache.input_shape[1]};
  require(grad_out.shape() == expected, "maxpool grad_out " + grad_out.shape_string() +
                                            " expected " + shape_string(expected));
  Tensor grad_x(cache.input_shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad_x[cache.argmax[i]] += grad_out[i];
  return grad_x;
}

// ------------------------------------------------------------------- ReLU

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

std::pair<Tensor, ReluCache> relu_forward(const Tensor& x) { return {relu(x), ReluCache{x}}; }

Tensor relu_backward(const ReluCache& cache, const Tensor& grad_out) {
  require(grad_out.shape() == cache.input.shape(), "relu grad_out " + grad_out.shape_string() +
                                                        " expected " +
                                                        cache.input.shape_string());
  Tensor grad_x = grad_out;
  for (std::size_t i = 0; i < grad_x.size(); ++i) {
    if (!(cache.input[i] > 0.0)) grad_x[i] = 0.0;
  }
  return grad_x;
}

// ------------------------------------------------------------------ Dense

std::pair<Tensor, DenseCache> dense_forward(const DenseLayer& layer, const Tensor& x) {
  require(x.rank() == 1 && x.dim(0) == layer.in_dim(),
          "dense input " + x.shape_string() + " does not match weights " +
              layer.weights.shape_string());
  const std::size_t out = layer.out_dim();
  Tensor y = layer.bias;
  double* yv = y.data();
  for (std::size_t i = 0; i < layer.in_dim(); ++i) {
    const double xv = x[i];
    const double* wrow = layer.weights.data() + i * out;
    for (std::size_t j = 0; j < out; ++j) yv[j] += xv * wrow[j];
  }
  return {std::move(y), DenseCache{x}};
}

DenseGrads dense_backward(const DenseLayer& layer, const DenseCache& cache,
                          const Tensor& grad_out) {
  require(cache.input.rank() == 1 && cache.input.dim(0) == layer.in_dim(),
          "dense cache does not match layer");
  require(grad_out.shape() == Shape{layer.out_dim()},
          "dense grad_out " + grad_out.shape_string() + " expected [" +
              std::to_string(layer.out_dim()) + "]");
  const std::size_t out = layer.out_dim();
  DenseGrads grads{Tensor(cache.input.shape()), Tensor(layer.weights.shape()), grad_out};
  const double* g = grad_out.data();
  for (std::size_t i = 0; i < layer.in_dim(); ++i) {
    const double xv = cache.input[i];
    const double* wrow = layer.weights.data() + i * out;
    double* gwrow = grads.weights.data() + i * out;
    double acc = 0.0;
    for (std::size_t j = 0; j < out; ++j) {
      gwrow[j] = xv * g[j];
      acc += wrow[j] * g[j];
    }
    grads.input[i] = acc;
  }
  return grads;
}

Tensor softmax(const Tensor& logits) {
  require(logits.rank() == 1 && logits.size() >= 2,
          "softmax expects at least two logits, got " + logits.shape_string());
  const double peak = *std::max_element(logits.values().begin(), logits.values().end());
  Tensor probs = logits;
  double total = 0.0;
  for (double& v : probs.values()) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : probs.values()) v /= total;
  return probs;
}

// ------------------------------------------------------------------- LSTM

std::pair<Tensor, LstmCache> lstm_forward(const LstmLayer& layer, const Tensor& x,
                                          bool return_sequences) {
  const std::size_t units = layer.units();
  const std::size_t width = 4 * units;
  require(layer.recurrent_kernel.shape() == Shape{units, width} &&
              layer.input_kernel.rank() == 2 && layer.input_kernel.dim(1) == width &&
              layer.bias.shape() == Shape{width},
          "inconsistent LSTM parameter shapes");
  if (x.rank() == 0 || x.dim(0) == 0) throw ShapeError("empty sequence");
  require(x.rank() == 2 && x.dim(1) == layer.in_channels(),
          "lstm input " + x.shape_string() + " does not match kernel " +
              layer.input_kernel.shape_string());

  const std::size_t steps = x.dim(0);
  const std::size_t c_in = x.dim(1);
  LstmCache cache;
  cache.input = x;
  cache.return_sequences = return_sequences;
  cache.gates.assign(steps * width, 0.0);
  cache.cells.assign(steps * units, 0.0);
  cache.cell_tanh.assign(steps * units, 0.0);
  cache.hidden.assign(steps * units, 0.0);

  std::vector<double> z(width);
  const std::vector<double> zeros(units, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    const double* h_prev = t ? &cache.hidden[(t - 1) * units] : zeros.data();
    const double* c_prev = t ? &cache.cells[(t - 1) * units] : zeros.data();
    std::copy(layer.bias.data(), layer.bias.data() + width, z.begin());
    const double* xt = x.data() + t * c_in;
    for (std::size_t c = 0; c < c_in; ++c) {
      const double xv = xt[c];
      const double* wrow = layer.input_kernel.data() + c * width;
      for (std::size_t j = 0; j < width; ++j) z[j] += xv * wrow[j];
    }
    for (std::size_t u = 0; u < units; ++u) {
      const double hv = h_prev[u];
      const double* urow = layer.recurrent_kernel.data() + u * width;
      for (std::size_t j = 0; j < width; ++j) z[j] += hv * urow[j];
    }
    double* gate = &cache.gates[t * width];
    double* cell = &cache.cells[t * units];
    double* cell_tanh = &cache.cell_tanh[t * units];
    double* hidden = &cache.hidden[t * units];
    for (std::size_t u = 0; u < units; ++u) {
      const double i = sigmoid(z[u]);
      const double f = sigmoid(z[units + u]);
      const double g = std::tanh(z[2 * units + u]);
      const double o = sigmoid(z[3 * units + u]);
      gate[u] = i;
      gate[units + u] = f;
      gate[2 * units + u] = g;
      gate[3 * units + u] = o;
      cell[u] = f * c_prev[u] + i * g;
      cell_tanh[u] = std::tanh(cell[u]);
      hidden[u] = o * cell_tanh[u];
    }
  }

  Tensor y = return_sequences
                 ? Tensor({steps, units}, cache.hidden)
                 : Tensor({units}, std::vector<double>(cache.hidden.end() - units,
                                                       cache.hidden.end()));
  return {std::move(y), std::move(cache)};
}

LstmGrads lstm_backward(const LstmLayer& layer, const LstmCache& cache, const Tensor& grad_out) {
  const std::size_t units = layer.units();
  const std::size_t width = 4 * units;
  const Tensor& x = cache.input;
  require(x.rank() == 2 && x.dim(1) == layer.in_channels() &&
              cache.hidden.size() == x.dim(0) * units,
          "lstm cache does not match layer");
  const std::size_t steps = x.dim(0);
  const std::size_t c_in = x.dim(1);
  const Shape expected = cache.return_sequences ? Shape{steps, units} : Shape{units};
  require(grad_out.shape() == expected, "lstm grad_out " + grad_out.shape_string() +
                                            " expected " + shape_string(expected));

  LstmGrads grads{Tensor(x.shape()), Tensor(layer.input_kernel.shape()),
                  Tensor(layer.recurrent_kernel.shape()), Tensor(layer.bias.shape())};
  std::vector<double> dh_next(units, 0.0), dc_next(units, 0.0), dz(width);
  const std::vector<double> zeros(units, 0.0);

  for (std::size_t t = steps; t-- > 0;) {
    const double* gate = &cache.gates[t * width];
    const double* cell_tanh = &cache.cell_tanh[t * units];
    const double* c_prev = t ? &cache.cells[(t - 1) * units] : zeros.data();
    const double* h_prev = t ? &cache.hidden[(t - 1) * units] : zeros.data();
    const double* g_out = nullptr;
    if (cache.return_sequences) {
      g_out = grad_out.data() + t * units;
    } else if (t + 1 == steps) {
      g_out = grad_out.data();
    }

    for (std::size_t u = 0; u < units; ++u) {
      const double dh = dh_next[u] + (g_out ? g_out[u] : 0.0);
      const double i = gate[u];
      const double f = gate[units + u];
      const double g = gate[2 * units + u];
      const double o = gate[3 * units + u];
      const double tc = cell_tanh[u];
      const double dc = dh * o * (1.0 - tc * tc) + dc_next[u];
      dz[u] = dc * g * i * (1.0 - i);
      dz[units + u] = dc * c_prev[u] * f * (1.0 - f);
      dz[2 * units + u] = dc * i * (1.0 - g * g);
      dz[3 * units + u] = dh * tc * o * (1.0 - o);
      dc_next[u] = dc * f;
    }

    for (std::size_t j = 0; j < width; ++j) grads.bias[j] += dz[j];

    const double* xt = x.data() + t * c_in;
    double* dxt = grads.input.data() + t * c_in;
    for (std::size_t c = 0; c < c_in; ++c) {
      const double xv = xt[c];
      const double* wrow = layer.input_kernel.data() + c * width;
      double* gwrow = grads.input_kernel.data() + c * width;
      double acc = 0.0;
      for (std::size_t j = 0; j < width; ++j) {
        gwrow[j] += xv * dz[j];
        acc += wrow[j] * dz[j];
      }
      dxt[c] = acc;
    }
    for (std::size_t u = 0; u < units; ++u) {
      const double hv = h_prev[u];
      const double* urow = layer.recurrent_kernel.data() + u * width;
      double* gurow = grads.recurrent_kernel.data() + u * width;
      double acc = 0.0;
      for (std::size_t j = 0; j < width; ++j) {
        gurow[j] += hv * dz[j];
        acc += urow[j] * dz[j];
      }
      dh_next[u] = acc;
    }
  }
  return grads;
}

// ------------------------------------------------------------ Reshaping

Tensor flatten(const Tensor& x) { return x.reshaped({x.size()}); }

Tensor concat(const Tensor& a, const Tensor& b) {
  require(a.rank() == 1 && b.rank() == 1,
          "concat expects rank-1 tensors, got " + a.shape_string() + " and " + b.shape_string());
  std::vector<double> joined(a.values().begin(), a.values().end());
  joined.insert(joined.end(), b.values().begin(), b.values().end());
  const std::size_t n = joined.size();
  return Tensor({n}, std::move(joined));
}

}  // namespace fdiag
