#include <doctest.h>

#include <stdexcept>

#include "cyclecap/frame.hpp"

using namespace cyclecap;

TEST_CASE("exactly eight schemes with stable names") {
  CHECK(kNumSchemes == 8);
  for (int i = 0; i < kNumSchemes; ++i) {
    const auto s = static_cast<ModulationScheme>(i);
    const auto back = scheme_from_name(scheme_name(s));
    REQUIRE(back.has_value());
    CHECK(*back == s);
  }
  CHECK(!scheme_from_name("ofdm").has_value());
}

TEST_CASE("bits per symbol") {
  CHECK(bits_per_symbol(ModulationScheme::BPSK) == 1);
  CHECK(bits_per_symbol(ModulationScheme::QPSK) == 2);
  CHECK(bits_per_symbol(ModulationScheme::PSK8) == 3);
  CHECK(bits_per_symbol(ModulationScheme::DQPSK_PI4) == 2);
  CHECK(bits_per_symbol(ModulationScheme::MSK) == 1);
  CHECK(bits_per_symbol(ModulationScheme::QAM16) == 4);
  CHECK(bits_per_symbol(ModulationScheme::QAM64) == 6);
  CHECK(bits_per_symbol(ModulationScheme::QAM256) == 8);
}

TEST_CASE("only MSK is CPM") {
  for (int i = 0; i < kNumSchemes; ++i) {
    const auto s = static_cast<ModulationScheme>(i);
    CHECK(is_cpm(s) == (s == ModulationScheme::MSK));
  }
}

TEST_CASE("spec validation") {
  FrameSpec ok;
  ok.scheme = ModulationScheme::QPSK;
  ok.t0 = 8;
  ok.beta = 0.35;
  ok.f0 = 0.001;
  ok.length = 4096;
  CHECK_NOTHROW(ok.validate());

  auto bad = ok;
  bad.t0 = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = ok;
  bad.beta = 0.05;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.beta = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  // MSK ignores beta entirely
  bad = ok;
  bad.scheme = ModulationScheme::MSK;
  bad.beta = 0.0;
  CHECK_NOTHROW(bad.validate());

  bad = ok;
  bad.f0 = 0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = ok;
  bad.length = 4095;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("frame component views and power") {
  IQFrame fr;
  fr.s = {{3.0, 4.0}, {0.0, 0.0}};
  CHECK(fr.i() == std::vector<double>{3.0, 0.0});
  CHECK(fr.q() == std::vector<double>{4.0, 0.0});
  CHECK(fr.mean_power() == doctest::Approx(12.5));
  CHECK(fr.all_finite());
  fr.s[1] = {std::numeric_limits<double>::quiet_NaN(), 0.0};
  CHECK(!fr.all_finite());
}
