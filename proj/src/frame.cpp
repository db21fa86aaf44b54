#include "cyclecap/frame.hpp"

#include <cmath>
#include <stdexcept>

#include "cyclecap/fft.hpp"

namespace cyclecap {

const char* scheme_name(ModulationScheme s) {
  switch (s) {
    case ModulationScheme::BPSK: return "bpsk";
    case ModulationScheme::QPSK: return "qpsk";
    case ModulationScheme::PSK8: return "8psk";
    case ModulationScheme::DQPSK_PI4: return "dqpsk_pi4";
    case ModulationScheme::MSK: return "msk";
    case ModulationScheme::QAM16: return "qam16";
    case ModulationScheme::QAM64: return "qam64";
    case ModulationScheme::QAM256: return "qam256";
  }
  return "?";
}

std::optional<ModulationScheme> scheme_from_name(std::string_view name) {
  for (int i = 0; i < kNumSchemes; ++i) {
    auto s = static_cast<ModulationScheme>(i);
    if (name == scheme_name(s)) return s;
  }
  return std::nullopt;
}

int bits_per_symbol(ModulationScheme s) {
  switch (s) {
    case ModulationScheme::BPSK: return 1;
    case ModulationScheme::QPSK: return 2;
    case ModulationScheme::PSK8: return 3;
    case ModulationScheme::DQPSK_PI4: return 2;
    case ModulationScheme::MSK: return 1;
    case ModulationScheme::QAM16: return 4;
    case ModulationScheme::QAM64: return 6;
    case ModulationScheme::QAM256: return 8;
  }
  return 0;
}

void FrameSpec::validate() const {
  if (t0 < 1) throw std::invalid_argument("frame spec: t0 must be >= 1");
  if (!is_cpm(scheme) && (beta < 0.1 || beta > 1.0))
    throw std::invalid_argument("frame spec: beta must be in [0.1, 1]");
  if (std::abs(f0) >= 0.5) throw std::invalid_argument("frame spec: |f0| must be < 0.5");
  if (length < 1 || !is_pow2(static_cast<std::size_t>(length)))
    throw std::invalid_argument("frame spec: length must be a power of two");
}

std::vector<double> IQFrame::i() const {
  std::vector<double> out(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) out[k] = s[k].real();
  return out;
}

std::vector<double> IQFrame::q() const {
  std::vector<double> out(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) out[k] = s[k].imag();
  return out;
}

double IQFrame::mean_power() const {
  if (s.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& z : s) acc += std::norm(z);
  return acc / static_cast<double>(s.size());
}

bool IQFrame::all_finite() const {
  for (const auto& z : s)
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
  return true;
}

}  // namespace cyclecap
