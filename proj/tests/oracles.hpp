#pragma once

// Independent reference implementations used only by tests: naive loops,
// central finite differences and brute-force recounts. Nothing here calls the
// optimized library kernels it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "fusiondiag/rng.hpp"
#include "fusiondiag/tensor.hpp"

namespace fdiag::oracle {

inline constexpr double kStep = 1e-6;
// Gradient magnitudes below this are compared on an absolute basis.
inline constexpr double kScaleFloor = 1e-3;

inline double relative_error(double analytic, double numeric) {
  return std::fabs(analytic - numeric) /
         std::max({std::fabs(analytic), std::fabs(numeric), kScaleFloor});
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Central difference of objective() w.r.t. every element of `param`,
// restoring each element afterwards.
inline Tensor numeric_gradient(Tensor& param, const std::function<double()>& objective,
                               double h = kStep) {
  Tensor grad(param.shape());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + h;
    const double plus = objective();
    param[i] = saved - h;
    const double minus = objective();
    param[i] = saved;
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

inline double max_relative_error(const Tensor& analytic, const Tensor& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, relative_error(analytic[i], numeric[i]));
  }
  return worst;
}

// <weights, y> as a scalar objective whose gradient w.r.t. y is `weights`.
inline double project(const Tensor& y, const Tensor& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * weights[i];
  return s;
}

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.dim(1); ++k) s += a.at(i, k) * b.at(k, j);
      out.at(i, j) = s;
    }
  }
  return out;
}

inline Tensor naive_conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
  const std::size_t k_size = kernels.dim(0), c_in = kernels.dim(1), c_out = kernels.dim(2);
  const std::size_t out_len = x.dim(0) - k_size + 1;
  Tensor y({out_len, c_out});
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t o = 0; o < c_out; ++o) {
      double s = bias[o];
      for (std::size_t k = 0; k < k_size; ++k) {
        for (std::size_t c = 0; c < c_in; ++c) s += x.at(t + k, c) * kernels.at(k, c, o);
      }
      y.at(t, o) = s;
    }
  }
  return y;
}

// Scalar LSTM (units = 1, one input channel) evaluated straight from the
// gate recurrences. w/u/b are (i, f, g, o).
struct ScalarLstm {
  double w[4];
  double u[4];
  double b[4];
};

inline std::vector<double> scalar_lstm_hidden(const ScalarLstm& p, const std::vector<double>& xs) {
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  double h = 0.0, c = 0.0;
  std::vector<double> out;
  for (double x : xs) {
    const double i = sig(p.w[0] * x + p.u[0] * h + p.b[0]);
    const double f = sig(p.w[1] * x + p.u[1] * h + p.b[1]);
    const double g = std::tanh(p.w[2] * x + p.u[2] * h + p.b[2]);
    const double o = sig(p.w[3] * x + p.u[3] * h + p.b[3]);
    c = f * c + i * g;
    h = o * std::tanh(c);
    out.push_back(h);
  }
  return out;
}

}  // namespace fdiag::oracle
