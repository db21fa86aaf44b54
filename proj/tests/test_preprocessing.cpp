#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <vector>

#include "cyclecap/dataset.hpp"
#include "cyclecap/errors.hpp"
#include "cyclecap/fft.hpp"
#include "cyclecap/preprocessing.hpp"
#include "cyclecap/rng.hpp"
#include "cyclecap/synthesis.hpp"

using namespace cyclecap;
using cd = std::complex<double>;
namespace fs = std::filesystem;

namespace {

std::vector<cd> white_noise(Rng& rng, int n) {
  std::vector<cd> x(n);
  for (auto& v : x) v = rng.cgaussian();
  return x;
}

std::vector<cd> tone(int n, double f, double amp) {
  std::vector<cd> x(n);
  for (int t = 0; t < n; ++t) {
    const double ph = 2.0 * std::numbers::pi * f * t;
    x[t] = amp * cd{std::cos(ph), std::sin(ph)};
  }
  return x;
}

double band_power(const std::vector<cd>& x, double f_lo, double f_hi) {
  std::vector<cd> spec(x);
  fft_inplace(spec);
  const std::size_t n = spec.size();
  double p = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double f = double(k) / double(n);
    if (f >= 0.5) f -= 1.0;
    if (f >= f_lo && f <= f_hi) p += std::norm(spec[k]);
  }
  return p / (double(n) * double(n));
}

IQFrame make_frame(std::vector<cd> s) {
  IQFrame fr;
  fr.s = std::move(s);
  fr.spec.length = static_cast<int>(fr.s.size());
  return fr;
}

}  // namespace

TEST_CASE("white-noise PSD is flat across 64 averaged segments") {
  Rng rng(31);
  // 64 overlapped segments of 1024 at 50% overlap
  const auto x = white_noise(rng, 1024 + 63 * 512);
  const auto psd = estimate_psd(x, 1024, 0.5);
  REQUIRE(psd.size() == 1024);
  const auto [mn, mx] = std::minmax_element(psd.begin(), psd.end());
  CHECK(*mx / *mn < 3.0);
  // unit-power noise: bins sum to the mean power
  double sum = 0.0;
  for (double v : psd) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("tone PSD concentrates at the tone frequency and keeps Parseval") {
  const auto x = tone(8192, 0.1, 1.0);
  const auto psd = estimate_psd(x, 1024, 0.5);
  const auto peak = std::max_element(psd.begin(), psd.end()) - psd.begin();
  const double f_peak = (double(peak) - 512.0) / 1024.0;
  CHECK(std::abs(f_peak - 0.1) <= 1.0 / 1024.0);
  double sum = 0.0;
  for (double v : psd) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(0.01));  // amplitude-1 tone has unit power
}

TEST_CASE("non-overlapping segments give exact Parseval") {
  Rng rng(32);
  auto x = white_noise(rng, 8192);
  const auto psd = estimate_psd(x, 512, 0.0);
  double frame_power = 0.0;
  for (const auto& v : x) frame_power += std::norm(v);
  frame_power /= double(x.size());
  double sum = 0.0;
  for (double v : psd) sum += v;
  CHECK(sum == doctest::Approx(frame_power).epsilon(1e-12));
}

TEST_CASE("psd input contract") {
  Rng rng(33);
  const auto x = white_noise(rng, 256);
  CHECK_THROWS_AS(estimate_psd(x, 512, 0.5), ConfigError);   // frame shorter than segment
  CHECK_THROWS_AS(estimate_psd(x, 100, 0.5), ConfigError);   // not a power of two
  CHECK_THROWS_AS(estimate_psd(x, 128, 1.0), ConfigError);   // full overlap
}

TEST_CASE("detect_boi finds a synthetic band") {
  std::vector<double> psd(1024, 1.0);
  for (int k = 300; k <= 380; ++k) psd[k] = 50.0;
  // a narrow dip inside the band must be closed
  psd[340] = 0.5;
  psd[341] = 0.5;
  const auto est = detect_boi(psd, 3.0, 5);
  CHECK(!est.fallback);
  CHECK(est.noise_floor == doctest::Approx(1.0));
  const double expect_center = ((300.0 + 380.0) / 2.0 - 512.0) / 1024.0;
  CHECK(est.center_freq == doctest::Approx(expect_center).epsilon(0.01));
  CHECK(est.bandwidth == doctest::Approx(81.0 / 1024.0).epsilon(0.05));
}

TEST_CASE("detect_boi picks the longest band, not the strongest") {
  std::vector<double> psd(1024, 1.0);
  for (int k = 100; k <= 110; ++k) psd[k] = 500.0;
  for (int k = 600; k <= 700; ++k) psd[k] = 10.0;
  const auto est = detect_boi(psd, 3.0, 5);
  CHECK(!est.fallback);
  CHECK(est.center_freq == doctest::Approx((650.0 - 512.0) / 1024.0).epsilon(0.01));
}

TEST_CASE("detect_boi on a featureless spectrum falls back flagged") {
  std::vector<double> psd(512, 2.0);
  const auto est = detect_boi(psd, 3.0, 5);
  CHECK(est.fallback);
  CHECK(est.center_freq == 0.0);
  CHECK(est.bandwidth == 1.0);
}

TEST_CASE("noise-only frame falls back flagged") {
  Rng rng(34);
  const auto x = white_noise(rng, 32768);
  const auto psd = estimate_psd(x, 1024, 0.5);
  const auto est = detect_boi(psd, 3.0, 5);
  CHECK(est.fallback);
}

TEST_CASE("detect_boi localizes a tone to a few bins") {
  // noise floor well above the rectangular-window leakage skirt; the tone
  // still towers over it per bin
  auto x = tone(16384, 0.1, 1.0);
  Rng rng(35);
  for (auto& v : x) v += std::sqrt(32.0) * rng.cgaussian();
  const auto psd = estimate_psd(x, 1024, 0.5);
  const auto est = detect_boi(psd, 3.0, 5);
  REQUIRE(!est.fallback);
  CHECK(est.bandwidth <= 3.0 / 1024.0 + 1e-12);
  CHECK(std::abs(est.center_freq - 0.1) < 2.0 / 1024.0);
}

TEST_CASE("BPSK band center lands on the CFO") {
  FrameSpec spec;
  spec.scheme = ModulationScheme::BPSK;
  spec.t0 = 10;
  spec.beta = 0.5;
  spec.f0 = 0.015;
  spec.snr_db = 10.0;
  spec.length = 32768;
  spec.seed = 41;
  const auto frame = synthesize_frame(spec);
  const auto psd = estimate_psd(frame, 1024, 0.5);
  const auto est = detect_boi(psd, 3.0, 5);
  REQUIRE(!est.fallback);
  CHECK(std::abs(est.center_freq - spec.f0) < 0.002);
  CHECK(est.bandwidth == doctest::Approx((1.0 + spec.beta) / spec.t0).epsilon(0.25));
}

TEST_CASE("apply_boi with a full-band estimate is the identity") {
  Rng rng(36);
  const auto frame = make_frame(white_noise(rng, 2048));
  BoiEstimate boi;
  boi.center_freq = 0.0;
  boi.bandwidth = 1.0;
  const auto out = apply_boi(frame, boi, 1.2);
  REQUIRE(out.size() == frame.size());
  for (std::size_t t = 0; t < frame.size(); ++t)
    CHECK(std::abs(out.s[t] - frame.s[t]) < 1e-6);
}

TEST_CASE("apply_boi kills an out-of-band tone by more than 40 dB") {
  const int n = 4096;
  auto x = tone(n, 0.4, 1.0);
  const auto in_frame = make_frame(std::move(x));
  const double before = band_power(in_frame.s, 0.39, 0.41);
  BoiEstimate boi;
  boi.center_freq = 0.0;
  boi.bandwidth = 0.2;
  const auto out = apply_boi(in_frame, boi, 1.0);
  const double after = band_power(out.s, 0.39, 0.41);
  CHECK(10.0 * std::log10(before / (after + 1e-300)) > 40.0);
}

TEST_CASE("apply_boi centers the detected band") {
  FrameSpec spec;
  spec.scheme = ModulationScheme::QPSK;
  spec.t0 = 8;
  spec.beta = 0.35;
  spec.f0 = 0.015;
  spec.snr_db = 10.0;
  spec.length = 32768;
  spec.seed = 42;
  const auto frame = synthesize_frame(spec);
  const auto est = detect_boi(estimate_psd(frame, 1024, 0.5), 3.0, 5);
  REQUIRE(!est.fallback);
  const auto out = apply_boi(frame, est, 1.2);
  // re-detect on the output: residual center must be near zero
  const auto est2 = detect_boi(estimate_psd(out, 1024, 0.5), 3.0, 5);
  REQUIRE(!est2.fallback);
  CHECK(std::abs(est2.center_freq) < 0.002);
}

TEST_CASE("apply_boi never increases total power") {
  Rng rng(37);
  FrameSpec spec;
  spec.scheme = ModulationScheme::QAM16;
  spec.t0 = 6;
  spec.beta = 0.3;
  spec.f0 = 0.01;
  spec.snr_db = 5.0;
  spec.length = 8192;
  spec.seed = 43;
  const auto frame = synthesize_frame(spec);
  for (double bw : {0.05, 0.2, 0.5, 1.0}) {
    BoiEstimate boi;
    boi.center_freq = 0.01;
    boi.bandwidth = bw;
    const auto out = apply_boi(frame, boi, 1.2);
    CHECK(out.mean_power() <= frame.mean_power() * (1.0 + 1e-12));
  }
}

TEST_CASE("normalize_utp yields exactly unit power and tracks the scale") {
  Rng rng(38);
  auto frame = make_frame(white_noise(rng, 1024));
  for (auto& v : frame.s) v *= 3.0;
  double scale = 0.0;
  const auto out = normalize_utp(frame, &scale);
  CHECK(out.mean_power() == doctest::Approx(1.0).epsilon(1e-6));

  double scale2 = 0.0;
  const auto out2 = normalize_utp(out, &scale2);
  CHECK(scale2 == doctest::Approx(1.0).epsilon(1e-6));

  // scaling the input by 7 changes nothing after normalization
  auto scaled = frame;
  for (auto& v : scaled.s) v *= 7.0;
  const auto out3 = normalize_utp(scaled);
  for (std::size_t t = 0; t < out.size(); ++t)
    CHECK(std::abs(out3.s[t] - out.s[t]) < 1e-6);
}

TEST_CASE("normalize_utp rejects an all-zero frame") {
  IQFrame z;
  z.s.assign(256, cd{0.0, 0.0});
  CHECK_THROWS_AS(normalize_utp(z), NumericError);
}

TEST_CASE("the whole pipeline is scale invariant") {
  FrameSpec spec;
  spec.scheme = ModulationScheme::PSK8;
  spec.t0 = 12;
  spec.beta = 0.6;
  spec.f0 = -0.008;
  spec.snr_db = 8.0;
  spec.length = 16384;
  spec.seed = 44;
  const auto frame = synthesize_frame(spec);
  auto scaled = frame;
  for (auto& v : scaled.s) v *= 42.0;

  PreprocessOptions opts;
  const auto a = preprocess_frame(frame, opts);
  const auto b = preprocess_frame(scaled, opts);
  CHECK(a.frame.mean_power() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(b.frame.mean_power() == doctest::Approx(1.0).epsilon(1e-6));
  for (std::size_t t = 0; t < a.frame.size(); ++t)
    CHECK(std::abs(a.frame.s[t] - b.frame.s[t]) < 1e-5);
  CHECK(b.scale == doctest::Approx(a.scale / 42.0).epsilon(1e-9));
}

TEST_CASE("preprocess_dataset rewrites files, flags, and manifest records") {
  const fs::path tmp =
      fs::temp_directory_path() / ("cyclecap_pre_" + std::to_string(::getpid()));
  fs::remove_all(tmp);

  GenerationConfig cfg;
  cfg.name = "pp";
  cfg.schemes = {ModulationScheme::BPSK, ModulationScheme::QAM16};
  cfg.frames_per_class = 2;
  cfg.t0_min = 4;
  cfg.t0_max = 8;
  cfg.frame_length = 4096;
  cfg.master_seed = 7;
  generate_dataset(cfg, tmp / "raw");

  PreprocessOptions opts;
  const auto man = preprocess_dataset(tmp / "raw", tmp / "pre", opts);
  CHECK(man.preprocessed);

  const auto loaded = DatasetManifest::load(tmp / "pre" / "manifest.json");
  CHECK(loaded.preprocessed);
  REQUIRE(loaded.records.size() == 4);
  for (const auto& r : loaded.records) {
    CHECK(r.file.rfind("pre_", 0) == 0);
    REQUIRE(r.scale.has_value());
    REQUIRE(r.boi.has_value());
    CHECK(*r.scale > 0.0);
    FrameFileReader reader(tmp / "pre" / r.file);
    CHECK(reader.preprocessed());
    const std::uint64_t rec_bytes = kFrameMetaBytes + 8ull * reader.frame_length();
    const auto k = static_cast<std::uint32_t>((r.offset - kFrameHeaderBytes) / rec_bytes);
    const auto fr = reader.read_frame(k);
    CHECK(fr.spec.seed == r.seed);  // original metadata preserved
    CHECK(fr.mean_power() == doctest::Approx(1.0).epsilon(1e-4));  // f32 storage
  }

  // double preprocessing is rejected
  CHECK_THROWS_AS(preprocess_dataset(tmp / "pre", tmp / "pre2", opts), ConfigError);
  fs::remove_all(tmp);
}
