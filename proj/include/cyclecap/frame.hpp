#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cyclecap {

enum class ModulationScheme : std::uint8_t {
  BPSK = 0,
  QPSK = 1,
  PSK8 = 2,
  DQPSK_PI4 = 3,
  MSK = 4,
  QAM16 = 5,
  QAM64 = 6,
  QAM256 = 7,
};

constexpr int kNumSchemes = 8;

const char* scheme_name(ModulationScheme s);
std::optional<ModulationScheme> scheme_from_name(std::string_view name);
int bits_per_symbol(ModulationScheme s);
inline bool is_cpm(ModulationScheme s) { return s == ModulationScheme::MSK; }

// Per-frame generation parameters. Frequencies are cycles/sample (fs = 1).
struct FrameSpec {
  ModulationScheme scheme = ModulationScheme::BPSK;
  int t0 = 8;              // symbol period, samples
  double beta = 0.35;      // SRRC roll-off; ignored for MSK
  double f0 = 0.0;         // carrier frequency offset
  double snr_db = 10.0;    // in-band SNR; +inf disables noise
  int length = 32768;      // samples per frame, power of two
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

// Complex baseband capture. Stored as complex samples; i()/q() give the
// component views used by the feature layers and the file format.
struct IQFrame {
  std::vector<std::complex<double>> s;
  FrameSpec spec;

  std::size_t size() const { return s.size(); }
  std::vector<double> i() const;
  std::vector<double> q() const;
  double mean_power() const;
  bool all_finite() const;
};

}  // namespace cyclecap
