#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "cyclecap/frame.hpp"
#include "cyclecap/rng.hpp"

namespace cyclecap {

// SRRC pulse span used everywhere, in symbols. Fixed so a frame is fully
// reproducible from its 32-byte metadata record. 20 symbols keeps the
// truncation ISI of the beta=0.1 edge of Table-IV-style configs below 1e-3
// at the near lags (span 12 leaves ~3e-3).
constexpr int kSrrcSpan = 20;

// Closed-form square-root raised-cosine impulse response, t in symbol units.
// Unnormalized; callers rescale tap vectors to unit energy.
double srrc_eval(double t, double beta);

// Symmetric tap vector sampled at t0 samples/symbol, normalized to unit
// energy. Odd tap count 2*(span*t0/2)+1.
std::vector<double> srrc_taps(double beta, int t0, int span_symbols);

// Maps a packed bitstream to unit-average-energy symbols. pi/4-DQPSK output
// is differentially encoded with an extra pi/4 rotation per symbol; MSK
// returns +/-1 frequency symbols consumed by the CPM path.
std::vector<std::complex<double>> map_symbols(ModulationScheme scheme,
                                              const std::vector<std::uint8_t>& bits);

struct FrameParts {
  std::vector<std::complex<double>> signal;
  std::vector<std::complex<double>> noise;  // already scaled; zero when snr_db = +inf
};

// Occupied bandwidth used for the in-band SNR definition, cycles/sample.
double occupied_bandwidth(ModulationScheme scheme, double beta, int t0);

// Synthesizes signal and noise separately; their sum is the frame. The rng
// draw order is fixed: timing offset, carrier phase, data bits, noise.
FrameParts synthesize_parts(const FrameSpec& spec, Rng& rng);

IQFrame synthesize_frame(const FrameSpec& spec, Rng& rng);

// Regenerates a frame from its metadata alone (derives the synthesis rng
// stream from spec.seed).
IQFrame synthesize_frame(const FrameSpec& spec);

}  // namespace cyclecap
