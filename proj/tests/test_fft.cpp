#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "cyclecap/fft.hpp"
#include "cyclecap/rng.hpp"

using namespace cyclecap;
using cd = std::complex<double>;

namespace {

// Textbook O(n^2) DFT, written directly from the definition.
std::vector<cd> naive_dft(const std::vector<cd>& x, bool inverse) {
  const std::size_t n = x.size();
  const double sgn = inverse ? 1.0 : -1.0;
  std::vector<cd> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cd acc{0.0, 0.0};
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = sgn * 2.0 * std::numbers::pi * double(k) * double(t) / double(n);
      acc += x[t] * cd{std::cos(ang), std::sin(ang)};
    }
    out[k] = inverse ? acc / double(n) : acc;
  }
  return out;
}

}  // namespace

TEST_CASE("matches the naive DFT at n=1024 to 1e-6 relative") {
  Rng rng(11);
  std::vector<cd> x(1024);
  for (auto& v : x) v = {rng.gaussian(), rng.gaussian()};
  auto ref = naive_dft(x, false);
  auto y = x;
  fft_inplace(y);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    num += std::norm(y[k] - ref[k]);
    den += std::norm(ref[k]);
  }
  CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("impulse transforms to a flat spectrum") {
  std::vector<cd> x(256, cd{0.0, 0.0});
  x[0] = {1.0, 0.0};
  fft_inplace(x);
  for (const auto& v : x) CHECK(std::abs(v - cd{1.0, 0.0}) < 1e-12);
}

TEST_CASE("pure tone lands in a single bin") {
  const std::size_t n = 512;
  const std::size_t k0 = 37;
  std::vector<cd> x(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double ang = 2.0 * std::numbers::pi * double(k0) * double(t) / double(n);
    x[t] = {std::cos(ang), std::sin(ang)};
  }
  fft_inplace(x);
  for (std::size_t k = 0; k < n; ++k) {
    if (k == k0)
      CHECK(std::abs(x[k] - cd{double(n), 0.0}) < 1e-9 * n);
    else
      CHECK(std::abs(x[k]) < 1e-9 * n);
  }
}

TEST_CASE("inverse undoes forward") {
  Rng rng(12);
  std::vector<cd> x(2048);
  for (auto& v : x) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  auto y = x;
  fft_inplace(y);
  fft_inplace(y, true);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - x[i]) < 1e-12);
}

TEST_CASE("Parseval holds") {
  Rng rng(13);
  const std::size_t n = 4096;
  std::vector<cd> x(n);
  double pt = 0.0;
  for (auto& v : x) {
    v = {rng.gaussian(), rng.gaussian()};
    pt += std::norm(v);
  }
  fft_inplace(x);
  double pf = 0.0;
  for (const auto& v : x) pf += std::norm(v);
  CHECK(pf / double(n) == doctest::Approx(pt).epsilon(1e-12));
}

TEST_CASE("non-power-of-two size is rejected") {
  std::vector<cd> x(100);
  CHECK_THROWS_AS(fft_inplace(x), std::invalid_argument);
}

TEST_CASE("fftshift moves bin 0 to n/2 and is its own inverse for even n") {
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  fftshift(v);
  CHECK(v == std::vector<int>{4, 5, 6, 7, 0, 1, 2, 3});
  CHECK(v[4] == 0);
  fftshift(v);
  CHECK(v == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}
