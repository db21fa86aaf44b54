#include "cyclecap/preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "cyclecap/errors.hpp"
#include "cyclecap/fft.hpp"

namespace cyclecap {

void BoiEstimate::validate() const {
  if (!(bandwidth > 0.0 && bandwidth <= 1.0)) throw ConfigError("boi: bandwidth outside (0, 1]");
  if (!(std::abs(center_freq) < 0.5)) throw ConfigError("boi: |center_freq| must be < 0.5");
  if (!(noise_floor >= 0.0)) throw ConfigError("boi: negative noise floor");
}

std::vector<double> estimate_psd(const std::vector<std::complex<double>>& x,
                                 int segment_length, double overlap) {
  const int n = static_cast<int>(x.size());
  if (segment_length < 2 || !is_pow2(static_cast<std::size_t>(segment_length)))
    throw ConfigError("psd: segment_length must be a power of two >= 2");
  if (segment_length > n) throw ConfigError("psd: frame shorter than one segment");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("psd: overlap must be in [0, 1)");

  const int hop = std::max(1, static_cast<int>(std::lround(segment_length * (1.0 - overlap))));
  std::vector<double> acc(segment_length, 0.0);
  std::vector<std::complex<double>> seg(segment_length);
  int count = 0;
  for (int start = 0; start + segment_length <= n; start += hop) {
    std::copy(x.begin() + start, x.begin() + start + segment_length, seg.begin());
    fft_inplace(seg);
    // |X[k]|^2 / L^2 is mean power per bin (rectangular window keeps the
    // Parseval identity exact for tones and noise alike)
    const double inv = 1.0 / (static_cast<double>(segment_length) * segment_length);
    for (int k = 0; k < segment_length; ++k) acc[k] += std::norm(seg[k]) * inv;
    ++count;
  }
  for (double& v : acc) v /= count;
  fftshift(acc);
  return acc;
}

std::vector<double> estimate_psd(const IQFrame& frame, int segment_length, double overlap) {
  return estimate_psd(frame.s, segment_length, overlap);
}

BoiEstimate detect_boi(const std::vector<double>& psd, double threshold_factor, int gap_bins) {
  const int n = static_cast<int>(psd.size());
  if (n == 0) throw ConfigError("detect_boi: empty psd");
  if (threshold_factor <= 0.0) throw ConfigError("detect_boi: threshold_factor must be > 0");

  std::vector<double> sorted(psd);
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  const double floor = sorted[n / 2];

  BoiEstimate est;
  est.noise_floor = floor;

  const double threshold = floor * threshold_factor;
  std::vector<char> mask(n, 0);
  for (int k = 0; k < n; ++k) mask[k] = psd[k] > threshold ? 1 : 0;

  // close interior gaps shorter than gap_bins
  int k = 0;
  while (k < n) {
    if (!mask[k]) {
      int j = k;
      while (j < n && !mask[j]) ++j;
      if (k > 0 && j < n && (j - k) < gap_bins) std::fill(mask.begin() + k, mask.begin() + j, 1);
      k = j;
    } else {
      ++k;
    }
  }

  // longest run of ones
  int best_lo = -1, best_len = 0;
  k = 0;
  while (k < n) {
    if (mask[k]) {
      int j = k;
      while (j < n && mask[j]) ++j;
      if (j - k > best_len) {
        best_len = j - k;
        best_lo = k;
      }
      k = j;
    } else {
      ++k;
    }
  }

  if (best_len == 0) {
    est.center_freq = 0.0;
    est.bandwidth = 1.0;
    est.fallback = true;
    return est;
  }

  const auto bin_freq = [n](int b) { return (static_cast<double>(b) - n / 2) / n; };
  double wsum = 0.0, fsum = 0.0;
  for (int b = best_lo; b < best_lo + best_len; ++b) {
    wsum += psd[b];
    fsum += psd[b] * bin_freq(b);
  }
  est.center_freq = fsum / wsum;
  est.bandwidth = static_cast<double>(best_len) / n;
  est.fallback = false;
  return est;
}

IQFrame apply_boi(const IQFrame& frame, const BoiEstimate& boi, double guard_factor) {
  boi.validate();
  if (guard_factor <= 0.0) throw ConfigError("apply_boi: guard_factor must be > 0");
  const std::size_t n = frame.size();
  if (!is_pow2(n)) throw ConfigError("apply_boi: frame length must be a power of two");

  IQFrame out;
  out.spec = frame.spec;
  out.s.resize(n);

  // spectral centering
  const double w = -2.0 * std::numbers::pi * boi.center_freq;
  for (std::size_t t = 0; t < n; ++t) {
    const double ph = w * static_cast<double>(t);
    out.s[t] = frame.s[t] * std::complex<double>{std::cos(ph), std::sin(ph)};
  }

  const double fc = guard_factor * boi.bandwidth / 2.0;
  if (fc >= 0.5) return out;  // passband covers everything: identity mask

  fft_inplace(out.s);
  const int transition = 32;  // raised-cosine edge, in bins
  const double ni = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    double f = static_cast<double>(k) / ni;
    if (f >= 0.5) f -= 1.0;
    const double d = (std::abs(f) - fc) * ni;  // bins beyond the passband edge
    double m = 1.0;
    if (d >= transition) {
      m = 0.0;
    } else if (d > 0.0) {
      const double c = std::cos(std::numbers::pi * d / (2.0 * transition));
      m = c * c;
    }
    out.s[k] *= m;
  }
  fft_inplace(out.s, true);
  return out;
}

IQFrame normalize_utp(const IQFrame& frame, double* scale_out) {
  const double p = frame.mean_power();
  if (!(p > 0.0) || !std::isfinite(p)) throw NumericError("normalize_utp: zero or non-finite power");
  const double scale = 1.0 / std::sqrt(p);
  IQFrame out;
  out.spec = frame.spec;
  out.s.resize(frame.size());
  for (std::size_t t = 0; t < frame.size(); ++t) out.s[t] = frame.s[t] * scale;
  if (scale_out) *scale_out = scale;
  return out;
}

PreprocessResult preprocess_frame(const IQFrame& frame, const PreprocessOptions& opts) {
  const int seg = std::min<int>(opts.segment_length, static_cast<int>(frame.size()));
  const auto psd = estimate_psd(frame, seg, opts.overlap);
  PreprocessResult res;
  res.boi = detect_boi(psd, opts.threshold_factor, opts.gap_bins);
  const IQFrame filtered = apply_boi(frame, res.boi, opts.guard_factor);
  res.frame = normalize_utp(filtered, &res.scale);
  return res;
}

DatasetManifest preprocess_dataset(const std::filesystem::path& in_dir,
                                   const std::filesystem::path& out_dir,
                                   const PreprocessOptions& opts) {
  DatasetManifest man = DatasetManifest::load(in_dir / "manifest.json");
  if (man.preprocessed) throw ConfigError("dataset is already preprocessed");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output dir: " + out_dir.string());

  // group records by source file, preserving record order within each
  std::vector<std::string> files;
  for (const auto& r : man.records)
    if (std::find(files.begin(), files.end(), r.file) == files.end()) files.push_back(r.file);

  for (const auto& fname : files) {
    FrameFileReader reader(in_dir / fname);
    const std::uint64_t record_bytes = kFrameMetaBytes + 8ull * reader.frame_length();
    const std::string out_name = "pre_" + fname;
    FrameFileWriter writer(out_dir / out_name, reader.frame_length(), true);
    for (auto& rec : man.records) {
      if (rec.file != fname) continue;
      const auto k = static_cast<std::uint32_t>((rec.offset - kFrameHeaderBytes) / record_bytes);
      const IQFrame frame = reader.read_frame(k);
      auto res = preprocess_frame(frame, opts);
      rec.offset = writer.append(res.frame);
      rec.file = out_name;
      rec.scale = res.scale;
      rec.boi = BoiRecord{res.boi.center_freq, res.boi.bandwidth, res.boi.noise_floor,
                          res.boi.fallback};
    }
    writer.close();
  }
  man.preprocessed = true;
  man.save(out_dir / "manifest.json");
  return man;
}

}  // namespace cyclecap
