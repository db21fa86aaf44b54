#include "cyclecap/synthesis.hpp"

#include <cmath>
#include <stdexcept>

namespace cyclecap {

namespace {

// Gray code position of v: adjacent ladder positions differ in one bit.
int gray_decode(unsigned v) {
  unsigned g = v;
  for (unsigned shift = 1; shift < 16; shift <<= 1) g ^= g >> shift;
  return static_cast<int>(g);
}

unsigned take_bits(const std::vector<std::uint8_t>& bits, std::size_t pos, int n) {
  unsigned v = 0;
  for (int k = 0; k < n; ++k) v = (v << 1) | (bits[pos + k] & 1u);
  return v;
}

// Gray-mapped PAM levels {-(2^m-1), ..., -1, +1, ..., +(2^m-1)}.
double pam_level(unsigned bits_value, int m) {
  const int idx = gray_decode(bits_value);
  return static_cast<double>(2 * idx - ((1 << m) - 1));
}

std::vector<std::complex<double>> map_qam(const std::vector<std::uint8_t>& bits,
                                          int bits_per_axis) {
  const int bps = 2 * bits_per_axis;
  const std::size_t nsym = bits.size() / bps;
  // mean square of one axis: average over odd levels
  const int levels = 1 << bits_per_axis;
  double axis_ms = 0.0;
  for (int i = 0; i < levels; ++i) {
    const double l = static_cast<double>(2 * i - (levels - 1));
    axis_ms += l * l;
  }
  axis_ms /= levels;
  const double scale = 1.0 / std::sqrt(2.0 * axis_ms);
  std::vector<std::complex<double>> out(nsym);
  for (std::size_t k = 0; k < nsym; ++k) {
    const double re = pam_level(take_bits(bits, k * bps, bits_per_axis), bits_per_axis);
    const double im =
        pam_level(take_bits(bits, k * bps + bits_per_axis, bits_per_axis), bits_per_axis);
    out[k] = {re * scale, im * scale};
  }
  return out;
}

}  // namespace

double srrc_eval(double t, double beta) {
  const double eps = 1e-9;
  if (std::abs(t) < eps) return 1.0 - beta + 4.0 * beta / M_PI;
  const double q = 4.0 * beta * t;
  if (std::abs(std::abs(q) - 1.0) < eps) {
    const double a = M_PI / (4.0 * beta);
    return (beta / std::sqrt(2.0)) *
           ((1.0 + 2.0 / M_PI) * std::sin(a) + (1.0 - 2.0 / M_PI) * std::cos(a));
  }
  const double num =
      std::sin(M_PI * t * (1.0 - beta)) + q * std::cos(M_PI * t * (1.0 + beta));
  return num / (M_PI * t * (1.0 - q * q));
}

std::vector<double> srrc_taps(double beta, int t0, int span_symbols) {
  if (!(beta > 0.0) || beta > 1.0)
    throw std::invalid_argument("srrc_taps: beta must be in (0, 1]");
  if (t0 < 1) throw std::invalid_argument("srrc_taps: t0 must be >= 1");
  if (span_symbols < 8) throw std::invalid_argument("srrc_taps: span must be >= 8 symbols");
  const int half = span_symbols * t0 / 2;
  std::vector<double> taps(2 * half + 1);
  double energy = 0.0;
  for (int i = 0; i <= 2 * half; ++i) {
    taps[i] = srrc_eval(static_cast<double>(i - half) / t0, beta);
    energy += taps[i] * taps[i];
  }
  const double s = 1.0 / std::sqrt(energy);
  for (double& v : taps) v *= s;
  return taps;
}

std::vector<std::complex<double>> map_symbols(ModulationScheme scheme,
                                              const std::vector<std::uint8_t>& bits) {
  const int bps = bits_per_symbol(scheme);
  if (bits.size() % bps != 0)
    throw std::invalid_argument("map_symbols: bit count not a multiple of bits/symbol");
  const std::size_t nsym = bits.size() / bps;
  std::vector<std::complex<double>> out;

  switch (scheme) {
    case ModulationScheme::BPSK:
    case ModulationScheme::MSK: {
      out.resize(nsym);
      for (std::size_t k = 0; k < nsym; ++k) out[k] = bits[k] ? -1.0 : 1.0;
      return out;
    }
    case ModulationScheme::QPSK: {
      out.resize(nsym);
      const double s = 1.0 / std::sqrt(2.0);
      for (std::size_t k = 0; k < nsym; ++k) {
        const double re = bits[2 * k] ? -s : s;
        const double im = bits[2 * k + 1] ? -s : s;
        out[k] = {re, im};
      }
      return out;
    }
    case ModulationScheme::PSK8: {
      out.resize(nsym);
      for (std::size_t k = 0; k < nsym; ++k) {
        const int idx = gray_decode(take_bits(bits, 3 * k, 3));
        const double ph = 2.0 * M_PI * idx / 8.0;
        out[k] = {std::cos(ph), std::sin(ph)};
      }
      return out;
    }
    case ModulationScheme::DQPSK_PI4: {
      out.resize(nsym);
      std::complex<double> acc{1.0, 0.0};
      for (std::size_t k = 0; k < nsym; ++k) {
        const int idx = gray_decode(take_bits(bits, 2 * k, 2));
        const double step = M_PI / 4.0 + idx * M_PI / 2.0;
        acc *= std::complex<double>{std::cos(step), std::sin(step)};
        out[k] = acc;
      }
      return out;
    }
    case ModulationScheme::QAM16: return map_qam(bits, 2);
    case ModulationScheme::QAM64: return map_qam(bits, 3);
    case ModulationScheme::QAM256: return map_qam(bits, 4);
  }
  throw std::invalid_argument("map_symbols: unsupported scheme");
}

double occupied_bandwidth(ModulationScheme scheme, double beta, int t0) {
  // MSK: 99%-power bandwidth of the h=1/2 CPM spectrum, ~1.18 symbol rates.
  const double w = is_cpm(scheme) ? 1.18 / t0 : (1.0 + beta) / t0;
  return std::min(w, 1.0);
}

namespace {

std::vector<std::uint8_t> draw_bits(Rng& rng, std::size_t n) {
  std::vector<std::uint8_t> bits(n);
  for (auto& b : bits) b = rng.bit() ? 1 : 0;
  return bits;
}

// Linear schemes: symbols upsampled by t0 and pulse-shaped with the SRRC
// filter evaluated at the frame's fractional timing offset, so every output
// sample sits in filter steady state.
std::vector<std::complex<double>> synth_linear(const FrameSpec& spec, Rng& rng,
                                               double tau, double phi0) {
  const int t0 = spec.t0;
  const int half = kSrrcSpan * t0 / 2;
  const int length = spec.length;
  const int nsym = (length + 2 * half) / t0 + 7;
  const int s0 = -2 * t0;  // symbol grid starts before the frame so edges stay in steady state

  const auto bits = draw_bits(rng, static_cast<std::size_t>(nsym) * bits_per_symbol(spec.scheme));
  const auto syms = map_symbols(spec.scheme, bits);

  const int ti = static_cast<int>(std::floor(tau));
  const double tf = tau - ti;

  // Tap table at fractional offset tf, scaled like the integer-grid taps.
  double energy = 0.0;
  for (int i = 0; i <= 2 * half; ++i) {
    const double v = srrc_eval(static_cast<double>(i - half) / t0, spec.beta);
    energy += v * v;
  }
  const double scale = 1.0 / std::sqrt(energy);
  std::vector<double> ptab(2 * half + 2);
  for (int j = 0; j < static_cast<int>(ptab.size()); ++j)
    ptab[j] = scale * srrc_eval((j - half - tf) / t0, spec.beta);

  const auto ceil_div = [](int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); };

  std::vector<std::complex<double>> x(length, {0.0, 0.0});
  for (int t = 0; t < length; ++t) {
    // symbol k contributes ptab[j], j = t + 2*half - (k*t0 + s0) - ti
    const int base = t + 2 * half - s0 - ti;
    const int k_lo = std::max(0, ceil_div(base - (2 * half + 1), t0));
    const int k_hi = std::min(nsym - 1, base / t0);
    std::complex<double> acc{0.0, 0.0};
    for (int k = k_lo; k <= k_hi; ++k) acc += syms[k] * ptab[base - k * t0];
    x[t] = acc;
  }

  for (int t = 0; t < length; ++t) {
    const double ph = phi0 + 2.0 * M_PI * spec.f0 * t;
    x[t] *= std::complex<double>{std::cos(ph), std::sin(ph)};
  }
  return x;
}

// MSK as continuous-phase frequency modulation, h = 1/2. The +/-1 symbol
// stream switches at boundaries offset by the timing draw; the phase ramp is
// integrated exactly across boundary crossings.
std::vector<std::complex<double>> synth_msk(const FrameSpec& spec, Rng& rng, double tau,
                                            double phi0) {
  const int t0 = spec.t0;
  const int length = spec.length;
  const int nsym = length / t0 + 8;
  const auto bits = draw_bits(rng, static_cast<std::size_t>(nsym));
  const auto syms = map_symbols(ModulationScheme::MSK, bits);

  const double rate = M_PI / (2.0 * t0);
  // boundaries at k*t0 + tau - 2*t0
  auto sym_at = [&](double u) {
    int k = static_cast<int>(std::floor((u - tau) / t0)) + 2;
    if (k < 0) k = 0;
    if (k >= nsym) k = nsym - 1;
    return syms[k].real();
  };

  std::vector<std::complex<double>> x(length);
  double integral = 0.0;
  for (int t = 0; t < length; ++t) {
    const double ph = phi0 + 2.0 * M_PI * spec.f0 * t + rate * integral;
    x[t] = {std::cos(ph), std::sin(ph)};
    // advance the data integral from t to t+1, splitting at a boundary
    const double u0 = t, u1 = t + 1.0;
    const double k_next = std::ceil((u0 - tau) / t0 - 1e-12) * t0 + tau;
    if (k_next > u0 && k_next < u1) {
      integral += sym_at(u0) * (k_next - u0) + sym_at(k_next) * (u1 - k_next);
    } else {
      integral += sym_at(u0 + 0.5);
    }
  }
  return x;
}

}  // namespace

FrameParts synthesize_parts(const FrameSpec& spec, Rng& rng) {
  spec.validate();
  const int half = is_cpm(spec.scheme) ? 0 : kSrrcSpan * spec.t0 / 2;
  if (spec.length < std::max(2 * half, spec.t0))
    throw std::invalid_argument("synthesize: frame too short for filter span");

  FrameParts parts;
  // fixed draw order: tau, phi0, data bits (inside synth), noise
  const double tau = rng.uniform() * spec.t0;
  const double phi0 = rng.uniform() * 2.0 * M_PI;
  parts.signal = is_cpm(spec.scheme) ? synth_msk(spec, rng, tau, phi0)
                                     : synth_linear(spec, rng, tau, phi0);

  parts.noise.assign(parts.signal.size(), {0.0, 0.0});
  if (std::isfinite(spec.snr_db)) {
    double psig = 0.0;
    for (const auto& z : parts.signal) psig += std::norm(z);
    psig /= static_cast<double>(parts.signal.size());
    const double w = occupied_bandwidth(spec.scheme, spec.beta, spec.t0);
    const double snr_lin = std::pow(10.0, spec.snr_db / 10.0);
    const double sigma2 = psig / (snr_lin * w);
    const double amp = std::sqrt(sigma2);
    for (auto& z : parts.noise) z = amp * rng.cgaussian();
  }
  return parts;
}

IQFrame synthesize_frame(const FrameSpec& spec, Rng& rng) {
  FrameParts parts = synthesize_parts(spec, rng);
  IQFrame frame;
  frame.spec = spec;
  frame.s.resize(parts.signal.size());
  for (std::size_t t = 0; t < parts.signal.size(); ++t)
    frame.s[t] = parts.signal[t] + parts.noise[t];
  return frame;
}

IQFrame synthesize_frame(const FrameSpec& spec) {
  Rng rng(derive_seed(spec.seed, 1));
  return synthesize_frame(spec, rng);
}

}  // namespace cyclecap
