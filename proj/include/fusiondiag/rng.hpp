#pragma once

#include <array>
#include <cstdint>

#include "fusiondiag/tensor.hpp"

namespace fdiag {

/// xoshiro256** generator seeded through splitmix64.
///
/// Output is a pure function of the seed on every platform; nothing here
/// touches <random> distributions, whose algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  // 53-bit uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer on [0, bound).
  std::uint64_t below(std::uint64_t bound);
  // Standard normal via Box-Muller (one pair consumed per call).
  double normal();

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_;
};

inline Rng rng_new(std::uint64_t seed) { return Rng(seed); }

// Seed for an independent sub-stream, e.g. one per class or per modality.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Uniform on [-L, L] with L = sqrt(6 / (fan_in + fan_out)); shape [fan_in, fan_out].
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
// Same bound, arbitrary shape (convolution kernels use receptive-field fans).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace fdiag
