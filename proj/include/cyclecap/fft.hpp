#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace cyclecap {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place radix-2 FFT. n must be a power of two. The inverse transform
// includes the 1/n scaling.
void fft_inplace(std::complex<double>* x, std::size_t n, bool inverse = false);

inline void fft_inplace(std::vector<std::complex<double>>& x, bool inverse = false) {
  fft_inplace(x.data(), x.size(), inverse);
}

// Rotates bin 0 to index n/2 (even n).
template <class T>
void fftshift(std::vector<T>& x) {
  const std::size_t h = x.size() / 2;
  for (std::size_t i = 0; i < h; ++i) std::swap(x[i], x[i + h]);
}

}  // namespace cyclecap
