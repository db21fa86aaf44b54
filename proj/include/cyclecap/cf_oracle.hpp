#pragma once

#include <optional>
#include <vector>

#include "cyclecap/features.hpp"
#include "cyclecap/frame.hpp"

namespace cyclecap {

// Largest symbol-rate harmonic index considered anywhere in the toolkit.
inline constexpr int kMaxHarmonic = 5;

// Inputs to the nonconjugate cycle-frequency formula
//   alpha = (n - 2m) * f0 +- k / T0
// for one harmonic index k.
struct CFParams {
  int n = 2;        // nonlinearity order, one of {2, 4, 6, 8}
  int m = 0;        // conjugation count (0 throughout this toolkit)
  int k = 0;        // symbol-rate harmonic index, 0..kMaxHarmonic
  double f0 = 0.0;  // carrier frequency offset, cycles/sample
  double t0 = 1.0;  // symbol period, samples

  void validate() const;  // throws std::invalid_argument
};

// The +-k/T0 pair for one k, aliased into (-0.5, 0.5], deduplicated, ascending.
std::vector<double> cycle_frequencies(const CFParams& params);

// Union of cycle_frequencies over k = 0..k_max, deduplicated, ascending.
std::vector<double> cycle_frequency_set(int n, int m, double f0, double t0,
                                        int k_max = kMaxHarmonic);

// The five basic cycle-frequency patterns a modulation class can show.
enum class CFPattern {
  BpskLike = 0,
  QamLike = 1,
  DqpskPi4Like = 2,
  Psk8Like = 3,
  SqpskLike = 4,
};

inline constexpr int kNumPatterns = 5;

const char* pattern_name(CFPattern p);
CFPattern pattern_of(ModulationScheme s);

// Each pattern is identified by the lowest nonlinearity order that raises
// spectral lines and by whether those lines sit on half-integer harmonics of
// the symbol rate.
struct PatternSignature {
  int min_order = 2;
  bool half_integer_harmonics = false;
};

PatternSignature pattern_signature(CFPattern p);

struct SpectralLine {
  double frequency = 0.0;      // cycles/sample, in [-0.5, 0.5)
  double prominence_db = 0.0;  // smoothed peak power over local median floor
};

struct LineDetectOptions {
  int smooth_bins = 33;          // moving-average width of the test statistic
  int baseline_half_window = 256;  // bins in each one-sided median window
  int guard_bins = 48;           // gap between test bin and median windows
  int min_separation_bins = 33;  // strongest-first suppression radius
  // Candidates below this fraction of the mean bin power are ignored: keeps
  // numerically dead out-of-band regions of noiseless frames from promoting
  // their own truncation leakage over a meaninglessly tiny local floor.
  double min_level_rel = 1e-3;

  void validate() const;  // throws std::invalid_argument
};

// Finds spectral lines in a FREQ* feature tensor: local maxima of the
// smoothed bin power that clear the local median floor by at least
// min_prominence_db.  Frequencies are refined to the raw peak bin,
// (index - N/2) / N.  Strongest line first.
std::vector<SpectralLine> detect_spectral_lines(const FeatureTensor& feat,
                                                double min_prominence_db,
                                                const LineDetectOptions& opts = {});

// Smallest order n in {2, 4, 6, 8} whose FREQ-n feature of a noiseless frame
// carries a detectable nonconjugate line, or nullopt if no order does.
std::optional<int> expected_min_order(ModulationScheme s);

}  // namespace cyclecap
