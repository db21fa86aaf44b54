#include "cyclecap/features.hpp"

#include <complex>

#include "cyclecap/errors.hpp"
#include "cyclecap/fft.hpp"

namespace cyclecap {

const char* feature_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::TIME2: return "time2";
    case FeatureKind::TIME4: return "time4";
    case FeatureKind::TIME6: return "time6";
    case FeatureKind::TIME8: return "time8";
    case FeatureKind::FREQ2: return "freq2";
    case FeatureKind::FREQ4: return "freq4";
    case FeatureKind::FREQ6: return "freq6";
    case FeatureKind::FREQ8: return "freq8";
  }
  return "?";
}

std::optional<FeatureKind> feature_from_name(std::string_view name) {
  for (int i = 0; i < kNumFeatures; ++i) {
    const auto k = static_cast<FeatureKind>(i);
    if (name == feature_name(k)) return k;
  }
  return std::nullopt;
}

int feature_order(FeatureKind k) {
  switch (k) {
    case FeatureKind::TIME2:
    case FeatureKind::FREQ2: return 2;
    case FeatureKind::TIME4:
    case FeatureKind::FREQ4: return 4;
    case FeatureKind::TIME6:
    case FeatureKind::FREQ6: return 6;
    case FeatureKind::TIME8:
    case FeatureKind::FREQ8: return 8;
  }
  return 0;
}

void square_layer(const std::vector<double>& i, const std::vector<double>& q,
                  std::vector<double>& oi, std::vector<double>& oq) {
  if (i.size() != q.size()) throw NumericError("square_layer: I/Q length mismatch");
  const std::size_t n = i.size();
  oi.resize(n);
  oq.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    oi[t] = i[t] * i[t] - q[t] * q[t];
    oq[t] = 2.0 * i[t] * q[t];
  }
}

void pow3_layer(const std::vector<double>& i, const std::vector<double>& q,
                std::vector<double>& oi, std::vector<double>& oq) {
  if (i.size() != q.size()) throw NumericError("pow3_layer: I/Q length mismatch");
  const std::size_t n = i.size();
  oi.resize(n);
  oq.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    oi[t] = i[t] * i[t] * i[t] - 3.0 * i[t] * q[t] * q[t];
    oq[t] = 3.0 * i[t] * i[t] * q[t] - q[t] * q[t] * q[t];
  }
}

std::vector<double> fft_mag_layer(const std::vector<double>& i, const std::vector<double>& q) {
  if (i.size() != q.size()) throw NumericError("fft_mag_layer: I/Q length mismatch");
  if (!is_pow2(i.size())) throw std::invalid_argument("fft_mag_layer: length not a power of two");
  std::vector<std::complex<double>> z(i.size());
  for (std::size_t t = 0; t < z.size(); ++t) z[t] = {i[t], q[t]};
  fft_inplace(z);
  fftshift(z);
  std::vector<double> mag(z.size());
  for (std::size_t t = 0; t < z.size(); ++t) mag[t] = std::abs(z[t]);
  return mag;
}

namespace {

FeatureTensor pack_time(FeatureKind kind, const std::vector<double>& i,
                        const std::vector<double>& q, double scale) {
  FeatureTensor t;
  t.kind = kind;
  t.length = static_cast<int>(i.size());
  t.channels = 2;
  t.data.resize(2 * i.size());
  for (std::size_t k = 0; k < i.size(); ++k) {
    t.data[2 * k] = static_cast<float>(i[k] * scale);
    t.data[2 * k + 1] = static_cast<float>(q[k] * scale);
  }
  return t;
}

FeatureTensor pack_freq(FeatureKind kind, const std::vector<double>& mag, double scale) {
  FeatureTensor t;
  t.kind = kind;
  t.length = static_cast<int>(mag.size());
  t.channels = 1;
  t.data.resize(mag.size());
  for (std::size_t k = 0; k < mag.size(); ++k) t.data[k] = static_cast<float>(mag[k] * scale);
  return t;
}

}  // namespace

FeatureSet extract_features(const IQFrame& frame,
                            const std::array<double, kNumFeatures>* scales) {
  const auto i1 = frame.i();
  const auto q1 = frame.q();
  std::vector<double> i2, q2, i4, q4, i6, q6, i8, q8;
  square_layer(i1, q1, i2, q2);
  square_layer(i2, q2, i4, q4);
  pow3_layer(i2, q2, i6, q6);
  square_layer(i4, q4, i8, q8);

  const auto s = [&](FeatureKind k) {
    return scales ? (*scales)[static_cast<int>(k)] : 1.0;
  };

  FeatureSet set;
  set[0] = pack_time(FeatureKind::TIME2, i2, q2, s(FeatureKind::TIME2));
  set[1] = pack_time(FeatureKind::TIME4, i4, q4, s(FeatureKind::TIME4));
  set[2] = pack_time(FeatureKind::TIME6, i6, q6, s(FeatureKind::TIME6));
  set[3] = pack_time(FeatureKind::TIME8, i8, q8, s(FeatureKind::TIME8));
  set[4] = pack_freq(FeatureKind::FREQ2, fft_mag_layer(i2, q2), s(FeatureKind::FREQ2));
  set[5] = pack_freq(FeatureKind::FREQ4, fft_mag_layer(i4, q4), s(FeatureKind::FREQ4));
  set[6] = pack_freq(FeatureKind::FREQ6, fft_mag_layer(i6, q6), s(FeatureKind::FREQ6));
  set[7] = pack_freq(FeatureKind::FREQ8, fft_mag_layer(i8, q8), s(FeatureKind::FREQ8));
  return set;
}

}  // namespace cyclecap
