#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cyclecap/frame.hpp"

namespace cyclecap {

enum class FeatureKind : std::uint8_t {
  TIME2 = 0,
  TIME4 = 1,
  TIME6 = 2,
  TIME8 = 3,
  FREQ2 = 4,
  FREQ4 = 5,
  FREQ6 = 6,
  FREQ8 = 7,
};

constexpr int kNumFeatures = 8;

const char* feature_name(FeatureKind k);
std::optional<FeatureKind> feature_from_name(std::string_view name);
inline bool is_freq_feature(FeatureKind k) { return static_cast<int>(k) >= 4; }

// Raw nonlinearity order of a feature kind (2, 4, 6 or 8).
int feature_order(FeatureKind k);

// length x channels, row-major (t, c). TIME* carry (I, Q) pairs; FREQ* a
// single nonnegative magnitude channel. Values are computed at 64-bit and
// cast to float for the network.
struct FeatureTensor {
  FeatureKind kind = FeatureKind::TIME2;
  int length = 0;
  int channels = 0;
  std::vector<float> data;

  float at(int t, int c) const { return data[static_cast<std::size_t>(t) * channels + c]; }
};

using FeatureSet = std::array<FeatureTensor, kNumFeatures>;

// Custom layers, explicit I/Q arithmetic. square: (I,Q) -> (I^2 - Q^2, 2IQ);
// pow3: (I,Q) -> (I^3 - 3IQ^2, 3I^2Q - Q^3). Both equal the complex power.
void square_layer(const std::vector<double>& i, const std::vector<double>& q,
                  std::vector<double>& oi, std::vector<double>& oq);
void pow3_layer(const std::vector<double>& i, const std::vector<double>& q,
                std::vector<double>& oi, std::vector<double>& oq);

// |FFT| with the zero-frequency bin rotated to index n/2. Length must be a
// power of two.
std::vector<double> fft_mag_layer(const std::vector<double>& i, const std::vector<double>& q);

// The feature tree: x2 = square(x), x4 = square(x2), x6 = pow3(x2),
// x8 = square(x4); FREQk = fft_mag_layer(TIMEk). scales, when given, are
// per-kind multipliers applied before the float cast (checkpoint-calibrated
// standardization).
FeatureSet extract_features(const IQFrame& frame,
                            const std::array<double, kNumFeatures>* scales = nullptr);

}  // namespace cyclecap
