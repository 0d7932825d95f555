#include "apcde/rng.hpp"

#include <cmath>

namespace apcde {

namespace {
// splitmix64, used only to spread (seed, stream) into engine seeds.
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}
}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : eng_(splitmix64(splitmix64(seed) ^ splitmix64(~stream))) {}

double Rng::uniform01() {
  // 53-bit mantissa, offset by half a ulp so the value is never 0 or 1.
  return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  double u1 = uniform01();
  double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw ArgumentError("Rng: uniform_index(0)");
  std::uint64_t limit = ~0ull - (~0ull % n + 1) % n;  // last multiple of n - 1
  std::uint64_t x;
  do {
    x = eng_();
  } while (x > limit);
  return static_cast<std::size_t>(x % n);
}

Tensor Rng::normal_vec(std::size_t n) {
  Tensor t = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i) t[i] = normal();
  return t;
}

Tensor Rng::normal_mat(std::size_t rows, std::size_t cols) {
  Tensor t = Tensor::zeros({rows, cols});
  for (std::size_t i = 0; i < rows * cols; ++i) t[i] = normal();
  return t;
}

}  // namespace apcde
