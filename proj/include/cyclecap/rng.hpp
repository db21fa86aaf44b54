#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>

namespace cyclecap {

// Mixes a master seed and a stream index into an independent 64-bit seed
// (splitmix64 finalizer, applied twice).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  for (int i = 0; i < 2; ++i) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z = z ^ (z >> 31);
  }
  return z;
}

// Deterministic random source. The engine is std::mt19937_64 (bit stream
// fixed by the standard); all distribution transforms are implemented here
// so the sample stream never depends on the C++ library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integers in [lo, hi], inclusive, bias-free rejection sampling.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next_u64());  // full range
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return lo + static_cast<std::int64_t>(r % range);
  }

  bool bit() { return (next_u64() >> 63) != 0; }

  // Standard normal via Box-Muller; pairs are cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Complex normal with total variance 1 (0.5 per component).
  std::complex<double> cgaussian() {
    const double s = std::sqrt(0.5);
    const double re = s * gaussian();
    const double im = s * gaussian();
    return {re, im};
  }

  // The cached spare is serialized as its bit pattern; decimal text would
  // round it and fork the stream.
  void save(std::ostream& os) const {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &spare_, sizeof bits);
    os << eng_ << ' ' << (has_spare_ ? 1 : 0) << ' ' << bits;
  }
  void load(std::istream& is) {
    int hs = 0;
    std::uint64_t bits = 0;
    is >> eng_ >> hs >> bits;
    std::memcpy(&spare_, &bits, sizeof bits);
    has_spare_ = hs != 0;
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cyclecap
