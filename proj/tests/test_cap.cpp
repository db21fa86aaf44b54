#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "cyclecap/cap.hpp"
#include "cyclecap/errors.hpp"
#include "cyclecap/nn.hpp"
#include "cyclecap/rng.hpp"

using namespace cyclecap;

namespace {

// Hand-built feature set with the right shapes for a given frame length.
FeatureSet fake_features(Rng& rng, int frame_length) {
  FeatureSet fs;
  for (int k = 0; k < kNumFeatures; ++k) {
    FeatureTensor& f = fs[k];
    f.kind = static_cast<FeatureKind>(k);
    f.length = frame_length;
    f.channels = feature_channels(f.kind);
    f.data.resize(static_cast<std::size_t>(f.length) * f.channels);
    for (auto& v : f.data) v = static_cast<float>(rng.gaussian());
  }
  return fs;
}

CapConfig tiny_config(std::vector<FeatureKind> kinds) {
  CapConfig cfg;
  cfg.frame_length = 32;
  cfg.classes = 3;
  cfg.kernel = 5;
  cfg.filters = {8, 12};
  cfg.kinds = std::move(kinds);
  return cfg;
}

}  // namespace

TEST_CASE("cap config validation") {
  CapConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.frame_length = 48;  // not a power of two
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.frame_length = 32;  // five halvings leave less than 2 samples
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.frame_length = 32768;
  cfg.kernel = 22;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.kernel = 23;
  cfg.kinds = {FeatureKind::TIME2, FeatureKind::TIME2};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.kinds = {};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.kinds = all_feature_kinds();
  cfg.classes = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("reference topology walks the published activation ladder") {
  auto net = build_cap();
  REQUIRE(net.num_branches() == 8);

  const std::vector<int> filters{16, 24, 32, 48, 64};
  for (std::size_t i = 0; i < net.num_branches(); ++i) {
    auto& b = net.branches_[i];
    REQUIRE(b.stages.size() == 5);
    CHECK(b.stages[0].conv.in_channels() == feature_channels(b.kind));
    for (int s = 0; s < 5; ++s) {
      CHECK(b.stages[s].conv.out_channels() == filters[s]);
      CHECK(b.stages[s].conv.kernel() == 23);
    }
    CHECK(b.head.conv.in_channels() == 64);
    CHECK(b.head.conv.out_channels() == 96);
    CHECK(b.fc.in_dim() == 96);
    CHECK(b.fc.out_dim() == 8);
  }

  // trace one TIME and one FREQ branch stage by stage at full length
  for (FeatureKind kind : {FeatureKind::TIME2, FeatureKind::FREQ2}) {
    auto& b = net.branches_[static_cast<int>(kind)];
    Rng rng(200 + static_cast<int>(kind));
    nn::Tensor<float> x(1, 32768, feature_channels(kind));
    for (auto& v : x.data) v = static_cast<float>(rng.gaussian());
    const std::vector<std::pair<int, int>> want{
        {16384, 16}, {8192, 24}, {4096, 32}, {2048, 48}, {1024, 64}};
    nn::Tensor<float> h = x;
    for (int s = 0; s < 5; ++s) {
      h = b.stages[s].forward(h, false);
      CHECK(h.length == want[s].first);
      CHECK(h.channels == want[s].second);
    }
    h = b.head.forward(h, false);
    CHECK(h.length == 1);
    CHECK(h.channels == 96);
    h = b.fc.forward(h);
    CHECK(h.channels == 8);
  }
}

TEST_CASE("toy topology at frame length 1024 keeps the halving ladder") {
  auto net = build_cap(1024);
  auto& b = net.branches_[0];
  Rng rng(201);
  nn::Tensor<float> x(1, 1024, 2);
  for (auto& v : x.data) v = static_cast<float>(rng.gaussian());
  const std::vector<int> lengths{512, 256, 128, 64, 32};
  nn::Tensor<float> h = x;
  for (int s = 0; s < 5; ++s) {
    h = b.stages[s].forward(h, false);
    CHECK(h.length == lengths[s]);
  }
  h = b.head.forward(h, false);
  CHECK(h.channels == 96);
}

TEST_CASE("parameter counts match the closed-form arithmetic") {
  auto net = build_cap();
  // first pooled stage of a TIME branch: 16 filters x 23 taps x 2 channels
  CHECK(net.branches_[0].stages[0].parameter_count() == 16 * 23 * 2 + 16 + 2 * 16);
  CHECK(net.branches_[0].stages[0].parameter_count() == 784);
  // final fully connected mixer: 64 inputs to 8 classes
  CHECK(net.final_fc_.parameter_count() == 64 * 8 + 8);
  CHECK(net.final_fc_.parameter_count() == 520);

  // full branch totals, TIME (2 input channels) and FREQ (1 input channel)
  const std::size_t common = (24 * 23 * 16 + 24 + 48) + (32 * 23 * 24 + 32 + 64) +
                             (48 * 23 * 32 + 48 + 96) + (64 * 23 * 48 + 64 + 128) +
                             (96 * 23 * 64 + 96 + 192) + (96 * 8 + 8);
  CHECK(net.branch_parameter_count(0) == common + 784);           // TIME2
  CHECK(net.branch_parameter_count(4) == common + 416);           // FREQ2
  CHECK(net.branch_parameter_count(0) == 276144);
  CHECK(net.branch_parameter_count(4) == 275776);
  CHECK(net.parameter_count() == 4 * 276144 + 4 * 275776 + 520);
  CHECK(net.parameter_count() == 2208200);

  // independent walker over the parameter references
  std::size_t walked = 0;
  for (const auto& p : net.params()) walked += p.value->size();
  CHECK(walked == net.parameter_count());
}

TEST_CASE("forward yields a probability vector") {
  CapConfig cfg;
  cfg.frame_length = 64;
  auto net = CapNetwork<float>(cfg);
  Rng rng(202);
  net.init(rng);
  auto fs = fake_features(rng, 64);
  auto probs = net.predict(fs);
  REQUIRE(probs.size() == 8);
  double sum = 0.0;
  for (double p : probs) {
    CHECK(p >= 0.0);
    sum += p;
  }
  CHECK(std::abs(sum - 1.0) < 1e-6);
}

TEST_CASE("zeroing all but one branch projection isolates that branch") {
  CapConfig cfg;
  cfg.frame_length = 64;
  auto net = CapNetwork<float>(cfg);
  Rng rng(203);
  net.init(rng);
  const std::size_t keep = 3;
  for (std::size_t i = 0; i < net.num_branches(); ++i) {
    if (i == keep) continue;
    for (auto& v : net.branches_[i].fc.w_) v = 0.0f;
    for (auto& v : net.branches_[i].fc.b_) v = 0.0f;
  }
  auto fs_a = fake_features(rng, 64);
  auto fs_b = fake_features(rng, 64);  // completely different draw
  // carry branch `keep`'s feature over so only the dead branches differ
  fs_b[keep] = fs_a[keep];
  auto pa = net.predict(fs_a);
  auto pb = net.predict(fs_b);
  for (int c = 0; c < 8; ++c) CHECK(pa[c] == doctest::Approx(pb[c]).epsilon(1e-6));

  // changing the surviving branch's feature does change the output
  auto fs_c = fake_features(rng, 64);
  fs_c[keep].data.assign(fs_c[keep].data.size(), 0.25f);
  auto pc = net.predict(fs_c);
  double max_diff = 0.0;
  for (int c = 0; c < 8; ++c) max_diff = std::max(max_diff, std::abs(pa[c] - pc[c]));
  CHECK(max_diff > 1e-4);
}

TEST_CASE("random initializations are unbiased across classes") {
  CapConfig cfg;
  cfg.frame_length = 64;
  auto net = CapNetwork<float>(cfg);
  Rng data_rng(204);
  std::vector<FeatureSet> inputs;
  for (int i = 0; i < 3; ++i) inputs.push_back(fake_features(data_rng, 64));
  std::vector<double> mean(8, 0.0);
  int count = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(300 + trial);
    net.init(rng);
    for (const auto& fs : inputs) {
      auto probs = net.predict(fs);
      for (int c = 0; c < 8; ++c) mean[c] += probs[c];
      ++count;
    }
  }
  for (int c = 0; c < 8; ++c) {
    mean[c] /= count;
    CHECK(std::abs(mean[c] - 0.125) < 0.03);
  }
}

TEST_CASE("serialization round-trips parameters and branch bindings") {
  // reversed, non-default branch order makes the binding test meaningful
  auto cfg = tiny_config({FeatureKind::FREQ4, FeatureKind::TIME2});
  CapNetwork<float> net(cfg);
  Rng rng(205);
  net.init(rng);

  // non-default batchnorm running statistics must survive the round trip
  std::vector<nn::Tensor<float>> xs;
  for (FeatureKind k : cfg.kinds) {
    nn::Tensor<float> x(2, cfg.frame_length, feature_channels(k));
    for (auto& v : x.data) v = static_cast<float>(rng.gaussian());
    xs.push_back(std::move(x));
  }
  net.forward(xs, true);

  std::stringstream buf;
  net.save(buf);
  auto loaded = CapNetwork<float>::load(buf);

  REQUIRE(loaded.num_branches() == 2);
  CHECK(loaded.branches_[0].kind == FeatureKind::FREQ4);
  CHECK(loaded.branches_[1].kind == FeatureKind::TIME2);
  CHECK(loaded.config().frame_length == cfg.frame_length);
  CHECK(loaded.config().classes == cfg.classes);

  auto pa = net.params();
  auto pb = loaded.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i].value->size() == pb[i].value->size());
    for (std::size_t j = 0; j < pa[i].value->size(); ++j)
      CHECK((*pa[i].value)[j] == (*pb[i].value)[j]);
  }
  for (std::size_t b = 0; b < 2; ++b) {
    const auto& s0 = net.branches_[b].stages[0].bn;
    const auto& s1 = loaded.branches_[b].stages[0].bn;
    for (int c = 0; c < s0.channels(); ++c) {
      CHECK(s0.running_mean_[c] == s1.running_mean_[c]);
      CHECK(s0.running_var_[c] == s1.running_var_[c]);
    }
  }

  auto la = net.forward(xs, false);
  auto lb = loaded.forward(xs, false);
  for (std::size_t i = 0; i < la.size(); ++i) CHECK(la.data[i] == lb.data[i]);
}

TEST_CASE("checkpoint loading rejects corrupt streams") {
  auto cfg = tiny_config({FeatureKind::TIME2});
  CapNetwork<float> net(cfg);
  Rng rng(206);
  net.init(rng);
  std::stringstream buf;
  net.save(buf);

  SUBCASE("precision mismatch") {
    CHECK_THROWS_AS(CapNetwork<double>::load(buf), IoError);
  }
  SUBCASE("truncation") {
    const std::string full = buf.str();
    std::stringstream cut(full.substr(0, full.size() / 2));
    CHECK_THROWS_AS(CapNetwork<float>::load(cut), IoError);
  }
}

TEST_CASE("gradients flow end to end through a two-branch network") {
  auto cfg = tiny_config({FeatureKind::TIME2, FeatureKind::FREQ4});
  CapNetwork<double> net(cfg);
  Rng rng(207);
  net.init(rng);

  std::vector<nn::Tensor<double>> xs;
  for (FeatureKind k : cfg.kinds) {
    nn::Tensor<double> x(2, cfg.frame_length, feature_channels(k));
    for (auto& v : x.data) v = rng.gaussian();
    xs.push_back(std::move(x));
  }
  const std::vector<int> labels{0, 2};

  auto loss_fn = [&]() {
    net.zero_grad();
    auto logits = net.forward(xs, true);
    auto out = nn::softmax_xent(logits, labels);
    net.backward(out.grad);
    return static_cast<double>(out.loss);
  };
  auto res = nn::grad_check(loss_fn, net.params(), {1e-4, 400, 11});
  INFO("worst ", res.worst_name, " analytic ", res.worst_analytic, " numeric ",
       res.worst_numeric);
  CHECK(res.passed);
  CHECK(res.checked == 400);
}

TEST_CASE("forward validates inputs") {
  auto cfg = tiny_config({FeatureKind::TIME2, FeatureKind::FREQ4});
  CapNetwork<float> net(cfg);
  Rng rng(208);
  net.init(rng);

  std::vector<nn::Tensor<float>> one;
  one.emplace_back(1, cfg.frame_length, 2);
  CHECK_THROWS_AS(net.forward(one, false), std::invalid_argument);

  std::vector<nn::Tensor<float>> bad_len;
  bad_len.emplace_back(1, cfg.frame_length / 2, 2);
  bad_len.emplace_back(1, cfg.frame_length / 2, 1);
  CHECK_THROWS_AS(net.forward(bad_len, false), std::invalid_argument);

  auto fs = fake_features(rng, cfg.frame_length);
  fs[static_cast<int>(FeatureKind::TIME2)].kind = FeatureKind::TIME4;
  CHECK_THROWS_AS(net.predict(fs), std::invalid_argument);
}

TEST_CASE("describe reports the published table values") {
  auto net = build_cap();
  const std::string table = net.describe();
  for (const char* needle :
       {"32768 x 2", "32768 x 1", "16384 x 16", "8192 x 24", "4096 x 32",
        "2048 x 48", "1024 x 64", "(16)[23 x 2]", "(16)[23 x 1]", "(96)[23 x 64]",
        "Parameters: 276144", "Parameters: 275776", "Concat: 64",
        "Total parameters: 2208200"}) {
    INFO("missing: ", needle);
    CHECK(table.find(needle) != std::string::npos);
  }
}
