#pragma once
#include <cstdint>
#include <random>
#include <vector>

#include "apcde/tensor.hpp"

namespace apcde {

// Named sub-streams derived from one user-facing seed, so that e.g. data
// shuffling and Monte-Carlo draws stay independent and reproducible.
enum class Stream : std::uint64_t {
  model_init = 1,
  shuffle = 2,
  monte_carlo = 3,
  dequantize = 4,
  sample = 5,
  sdr = 6,
  synth = 7,
  probe = 8,
};

/// Deterministic random source. All draws are produced by explicit
/// formulas on top of mt19937_64 so results are bit-reproducible across
/// platforms for a fixed seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);
  Rng(std::uint64_t seed, Stream stream) : Rng(seed, static_cast<std::uint64_t>(stream)) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform on the open interval (0,1).
  double uniform01();
  /// Standard normal via Box-Muller (two uniforms per draw, no cache).
  double normal();
  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::size_t uniform_index(std::size_t n);

  Tensor normal_vec(std::size_t n);
  Tensor normal_mat(std::size_t rows, std::size_t cols);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace apcde
