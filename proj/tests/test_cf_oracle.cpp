#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "cyclecap/cf_oracle.hpp"
#include "cyclecap/features.hpp"
#include "cyclecap/rng.hpp"
#include "cyclecap/synthesis.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace cyclecap;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

IQFrame make_frame(ModulationScheme s, int t0, double beta, double f0, int length,
                   std::uint64_t seed) {
  FrameSpec spec{s, t0, beta, f0, kInf, length, seed};
  return synthesize_frame(spec);
}

// circular distance between a detected frequency and a candidate alpha
double alpha_distance(double freq, double alpha) {
  double d = std::abs(freq - alpha);
  return std::min(d, 1.0 - d);
}

double nearest_alpha_bins(double freq, const std::vector<double>& alphas, int length) {
  double best = 1.0;
  for (double a : alphas) best = std::min(best, alpha_distance(freq, a));
  return best * length;
}

}  // namespace

TEST_CASE("cycle_frequencies matches the formula") {
  CFParams p{4, 0, 1, 0.01, 10.0};
  auto a = cycle_frequencies(p);
  REQUIRE(a.size() == 2);
  CHECK(a[0] == doctest::Approx(-0.06).epsilon(1e-12));
  CHECK(a[1] == doctest::Approx(0.14).epsilon(1e-12));

  CFParams q{2, 0, 0, 0.015, 10.0};
  auto b = cycle_frequencies(q);
  REQUIRE(b.size() == 1);
  CHECK(b[0] == doctest::Approx(0.03).epsilon(1e-12));
}

TEST_CASE("cycle frequencies wrap into the principal interval and dedupe") {
  // 8 * 0.09 = 0.72 aliases to -0.28
  auto a = cycle_frequencies(CFParams{8, 0, 0, 0.09, 4.0});
  REQUIRE(a.size() == 1);
  CHECK(a[0] == doctest::Approx(-0.28).epsilon(1e-12));

  // 0.1 +- 0.5: both ends congruent mod 1 -> single alpha at -0.4
  auto b = cycle_frequencies(CFParams{2, 0, 1, 0.05, 2.0});
  REQUIRE(b.size() == 1);
  CHECK(b[0] == doctest::Approx(-0.4).epsilon(1e-12));

  // half-band edge lands on +0.5, never -0.5
  auto c = cycle_frequencies(CFParams{2, 0, 1, 0.0, 2.0});
  REQUIRE(c.size() == 1);
  CHECK(c[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("conjugate order two ignores the carrier") {
  auto a = cycle_frequencies(CFParams{2, 1, 3, 0.01, 8.0});
  auto b = cycle_frequencies(CFParams{2, 1, 3, 0.02, 8.0});
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("cycle frequency parameters are validated") {
  CHECK_THROWS_AS(cycle_frequencies(CFParams{2, 0, 0, 0.01, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(cycle_frequencies(CFParams{3, 0, 0, 0.01, 8.0}), std::invalid_argument);
  CHECK_THROWS_AS(cycle_frequencies(CFParams{2, 0, 6, 0.01, 8.0}), std::invalid_argument);
  CHECK_THROWS_AS(cycle_frequencies(CFParams{2, 0, -1, 0.01, 8.0}), std::invalid_argument);
  CHECK_THROWS_AS(cycle_frequencies(CFParams{2, 2, 0, 0.01, 8.0}), std::invalid_argument);
  CHECK_THROWS_AS(cycle_frequencies(CFParams{2, 0, 0, 0.5, 8.0}), std::invalid_argument);
  CHECK_THROWS_AS(cycle_frequency_set(2, 0, 0.01, 8.0, 6), std::invalid_argument);
}

TEST_CASE("cycle_frequency_set unions the harmonics") {
  auto got = cycle_frequency_set(2, 0, 0.015, 10.0, 2);
  std::vector<double> want{-0.17, -0.07, 0.03, 0.13, 0.23};
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("pattern taxonomy has five consistent variants") {
  std::set<std::string> names;
  for (int i = 0; i < kNumPatterns; ++i) names.insert(pattern_name(static_cast<CFPattern>(i)));
  CHECK(names.size() == 5);

  std::set<CFPattern> seen;
  for (int i = 0; i < kNumSchemes; ++i) {
    const auto s = static_cast<ModulationScheme>(i);
    const auto pat = pattern_of(s);
    seen.insert(pat);
    // the signature's minimum order is the scheme's minimum detectable order
    auto mo = expected_min_order(s);
    REQUIRE(mo.has_value());
    CHECK(pattern_signature(pat).min_order == *mo);
  }
  CHECK(seen.size() == 5);  // all five patterns are realized by the scheme set

  CHECK(pattern_signature(CFPattern::BpskLike).half_integer_harmonics == false);
  CHECK(pattern_signature(CFPattern::SqpskLike).half_integer_harmonics == true);
  CHECK(pattern_signature(CFPattern::DqpskPi4Like).half_integer_harmonics == true);
  CHECK(pattern_of(ModulationScheme::MSK) == CFPattern::SqpskLike);
  CHECK(pattern_of(ModulationScheme::QPSK) == CFPattern::QamLike);
}

TEST_CASE("bpsk squared spectrum shows the carrier line") {
  auto fr = make_frame(ModulationScheme::BPSK, 10, 0.2, 0.015, 32768, 41);
  auto feats = extract_features(fr);
  auto lines = detect_spectral_lines(feats[static_cast<int>(FeatureKind::FREQ2)], 10.0);
  REQUIRE(lines.size() == 1);
  CHECK(lines.front().prominence_db > 15.0);
  CHECK(std::abs(lines.front().frequency - 0.03) <= 2.0 / 32768.0);

  // carrier at 0.01: the squared signal peaks at 0.02
  auto fr2 = make_frame(ModulationScheme::BPSK, 10, 0.35, 0.01, 32768, 42);
  auto feats2 = extract_features(fr2);
  auto lines2 = detect_spectral_lines(feats2[static_cast<int>(FeatureKind::FREQ2)], 10.0);
  REQUIRE(!lines2.empty());
  CHECK(std::abs(lines2.front().frequency - 0.02) <= 2.0 / 32768.0);
}

TEST_CASE("qpsk hides order two but shows order four") {
  for (std::uint64_t seed : {51, 52, 53}) {
    auto fr = make_frame(ModulationScheme::QPSK, 10, 0.2, 0.015, 32768, seed);
    auto feats = extract_features(fr);
    auto l2 = detect_spectral_lines(feats[static_cast<int>(FeatureKind::FREQ2)], 6.0);
    CHECK(l2.empty());
    auto l4 = detect_spectral_lines(feats[static_cast<int>(FeatureKind::FREQ4)], 10.0);
    REQUIRE(!l4.empty());
    CHECK(std::abs(l4.front().frequency - 0.06) <= 2.0 / 32768.0);
  }
}

TEST_CASE("pure noise yields no lines") {
  int false_alarms = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(9000 + static_cast<std::uint64_t>(seed));
    IQFrame fr;
    fr.s.resize(32768);
    for (auto& v : fr.s) v = rng.cgaussian();
    auto feats = extract_features(fr);
    bool any = false;
    for (int fi = 4; fi < 8; ++fi)
      if (!detect_spectral_lines(feats[fi], 10.0).empty()) any = true;
    if (any) ++false_alarms;
  }
  CHECK(false_alarms < 5);
}

TEST_CASE("detected lines land on predicted cycle frequencies") {
  const double f0 = 0.015;
  const int t0 = 10;
  const int length = 32768;
  for (int si = 0; si < kNumSchemes; ++si) {
    const auto scheme = static_cast<ModulationScheme>(si);
    CAPTURE(scheme_name(scheme));
    auto fr = make_frame(scheme, t0, 0.1, f0, length, 600 + static_cast<std::uint64_t>(si));
    auto feats = extract_features(fr);
    const int min_order = expected_min_order(scheme).value();
    for (int fi = 4; fi < 8; ++fi) {
      const int order = feature_order(static_cast<FeatureKind>(fi));
      auto lines = detect_spectral_lines(feats[fi], 10.0);
      if (order < min_order) {
        // below the scheme's minimum order no line may appear
        CHECK(lines.empty());
        continue;
      }
      auto alphas = cycle_frequency_set(order, 0, f0, t0);
      const bool half_k =
          pattern_signature(pattern_of(scheme)).half_integer_harmonics;
      if (half_k) {
        auto extra = cycle_frequency_set(order, 0, f0, 2.0 * t0);
        alphas.insert(alphas.end(), extra.begin(), extra.end());
      }
      for (const auto& ln : lines) {
        CAPTURE(order);
        CAPTURE(ln.frequency);
        CHECK(nearest_alpha_bins(ln.frequency, alphas, length) <= 2.0);
      }
    }
  }
}

TEST_CASE("frequency shift moves lines by order times shift") {
  const double df = 0.00113;
  auto shifted = [&](const IQFrame& fr) {
    IQFrame out = fr;
    for (std::size_t t = 0; t < out.s.size(); ++t) {
      const double ph = 2.0 * 3.14159265358979323846 * df * static_cast<double>(t);
      out.s[t] *= std::complex<double>(std::cos(ph), std::sin(ph));
    }
    return out;
  };

  auto fr = make_frame(ModulationScheme::BPSK, 10, 0.2, 0.015, 32768, 71);
  auto fs = shifted(fr);
  auto a = extract_features(fr);
  auto b = extract_features(fs);
  for (int fi : {4, 5}) {
    const int order = feature_order(static_cast<FeatureKind>(fi));
    auto la = detect_spectral_lines(a[fi], 12.0);
    auto lb = detect_spectral_lines(b[fi], 12.0);
    REQUIRE(la.size() == 1);
    REQUIRE(lb.size() == 1);
    CHECK(std::abs((lb.front().frequency - la.front().frequency) - order * df) <=
          1.0 / 32768.0);
  }

  auto mr = make_frame(ModulationScheme::MSK, 10, 0.0, 0.015, 32768, 72);
  auto ms = shifted(mr);
  auto ma = detect_spectral_lines(extract_features(mr)[4], 12.0);
  auto mb = detect_spectral_lines(extract_features(ms)[4], 12.0);
  REQUIRE(ma.size() == 2);
  REQUIRE(mb.size() == 2);
  auto by_freq = [](const SpectralLine& x, const SpectralLine& y) {
    return x.frequency < y.frequency;
  };
  std::sort(ma.begin(), ma.end(), by_freq);
  std::sort(mb.begin(), mb.end(), by_freq);
  for (int i = 0; i < 2; ++i)
    CHECK(std::abs((mb[i].frequency - ma[i].frequency) - 2 * df) <= 1.0 / 32768.0);
}

TEST_CASE("line detector rejects invalid inputs") {
  auto fr = make_frame(ModulationScheme::BPSK, 8, 0.35, 0.0, 4096, 5);
  auto feats = extract_features(fr);
  CHECK_THROWS_AS(detect_spectral_lines(feats[static_cast<int>(FeatureKind::TIME2)], 10.0),
                  std::invalid_argument);

  LineDetectOptions bad;
  bad.smooth_bins = 10;
  CHECK_THROWS_AS(detect_spectral_lines(feats[4], 10.0, bad), std::invalid_argument);
  bad = {};
  bad.baseline_half_window = 4;
  CHECK_THROWS_AS(detect_spectral_lines(feats[4], 10.0, bad), std::invalid_argument);
  bad = {};
  bad.guard_bins = 2;
  CHECK_THROWS_AS(detect_spectral_lines(feats[4], 10.0, bad), std::invalid_argument);
  bad = {};
  bad.min_separation_bins = 0;
  CHECK_THROWS_AS(detect_spectral_lines(feats[4], 10.0, bad), std::invalid_argument);
  bad = {};
  bad.min_level_rel = 1.5;
  CHECK_THROWS_AS(detect_spectral_lines(feats[4], 10.0, bad), std::invalid_argument);

  // too short for the baseline window
  FeatureTensor tiny;
  tiny.kind = FeatureKind::FREQ2;
  tiny.length = 256;
  tiny.channels = 1;
  tiny.data.assign(256, 1.0f);
  CHECK_THROWS_AS(detect_spectral_lines(tiny, 10.0), std::invalid_argument);
}

TEST_CASE("min-order table matches the golden file") {
  std::ifstream in(std::string(CYCLECAP_GOLDEN_DIR) + "/expected_min_order.json");
  REQUIRE(in.good());
  nlohmann::json j;
  in >> j;
  const auto& table = j.at("min_order");
  REQUIRE(table.size() == static_cast<std::size_t>(kNumSchemes));
  for (int i = 0; i < kNumSchemes; ++i) {
    const auto s = static_cast<ModulationScheme>(i);
    auto mo = expected_min_order(s);
    REQUIRE(mo.has_value());
    CHECK(table.at(scheme_name(s)).get<int>() == *mo);
  }
}

TEST_CASE("min-order table re-derives empirically") {
  // the recipe recorded alongside the golden table
  LineDetectOptions opts;
  opts.smooth_bins = 9;
  for (int si = 0; si < kNumSchemes; ++si) {
    const auto scheme = static_cast<ModulationScheme>(si);
    CAPTURE(scheme_name(scheme));
    std::optional<int> derived;
    for (int fi = 4; fi < 8 && !derived; ++fi) {
      const int order = feature_order(static_cast<FeatureKind>(fi));
      bool all_seeds = true;
      for (int seed = 1; seed <= 3; ++seed) {
        auto fr = make_frame(scheme, 4, 0.5, 0.015, 65536,
                             static_cast<std::uint64_t>(7000 + 10 * si + seed));
        auto feats = extract_features(fr);
        if (detect_spectral_lines(feats[fi], 10.0, opts).empty()) {
          all_seeds = false;
          break;
        }
      }
      if (all_seeds) derived = order;
    }
    REQUIRE(derived.has_value());
    CHECK(*derived == expected_min_order(scheme).value());
  }
}
