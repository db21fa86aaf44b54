#include "cyclecap/fft.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace cyclecap {

namespace {

// Twiddles for a given size, cached per thread (sizes in use are few).
const std::vector<std::complex<double>>& twiddles(std::size_t n) {
  thread_local std::unordered_map<std::size_t, std::vector<std::complex<double>>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<std::complex<double>> w(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double a = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
    w[k] = {std::cos(a), std::sin(a)};
  }
  return cache.emplace(n, std::move(w)).first->second;
}

}  // namespace

void fft_inplace(std::complex<double>* x, std::size_t n, bool inverse) {
  if (!is_pow2(n)) throw std::invalid_argument("fft: length must be a power of two");
  if (n == 1) return;

  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  const auto& w = twiddles(n);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> tw = w[k * step];
        if (inverse) tw = std::conj(tw);
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * tw;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
      }
    }
  }
  if (inverse) {
    const double s = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) x[i] *= s;
  }
}

}  // namespace cyclecap
