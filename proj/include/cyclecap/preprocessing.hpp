#pragma once

#include <filesystem>
#include <vector>

#include "cyclecap/dataset.hpp"
#include "cyclecap/frame.hpp"

namespace cyclecap {

// Band-of-interest estimate. Frequencies in cycles/sample; noise_floor in
// power per PSD bin.
struct BoiEstimate {
  double center_freq = 0.0;
  double bandwidth = 1.0;
  double noise_floor = 0.0;
  bool fallback = false;

  void validate() const;  // throws ConfigError
};

struct PreprocessOptions {
  int segment_length = 1024;      // PSD segment, clamped to the frame length
  double overlap = 0.5;           // segment overlap fraction
  double threshold_factor = 3.0;  // BOI mask threshold over the median floor
  int gap_bins = 5;               // close mask gaps shorter than this
  double guard_factor = 1.2;      // passband widening in apply_boi
};

// Averaged periodogram (rectangular window, overlapping segments), shifted
// so bin 0 maps to -0.5 cycles/sample. Values are mean power per bin, so the
// plain sum over bins equals the frame's mean power.
std::vector<double> estimate_psd(const std::vector<std::complex<double>>& x,
                                 int segment_length, double overlap);
std::vector<double> estimate_psd(const IQFrame& frame, int segment_length, double overlap);

// Energy detection on the shifted PSD: median noise floor, threshold mask,
// morphological gap closing, longest run, power-weighted centroid. A frame
// with no bin above threshold yields a flagged full-band fallback.
BoiEstimate detect_boi(const std::vector<double>& psd, double threshold_factor,
                       int gap_bins = 5);

// Centers the band at zero frequency and masks out-of-band noise in the
// frequency domain (raised-cosine transition over 32 bins beyond the
// guard_factor-widened passband). Output length unchanged; never raises
// total power.
IQFrame apply_boi(const IQFrame& frame, const BoiEstimate& boi, double guard_factor);

// Scales to unit total power: mean(I^2 + Q^2) = 1. The applied scale factor
// is written to *scale_out when given. All-zero input is a NumericError.
IQFrame normalize_utp(const IQFrame& frame, double* scale_out = nullptr);

struct PreprocessResult {
  IQFrame frame;
  BoiEstimate boi;
  double scale = 1.0;
};

PreprocessResult preprocess_frame(const IQFrame& frame, const PreprocessOptions& opts);

// Reads a generated dataset (manifest.json in in_dir), preprocesses every
// frame, writes pre_<scheme>.cycf files plus an updated manifest into
// out_dir. Records gain scale and BOI entries.
DatasetManifest preprocess_dataset(const std::filesystem::path& in_dir,
                                   const std::filesystem::path& out_dir,
                                   const PreprocessOptions& opts);

}  // namespace cyclecap
