#pragma once

#include <cstdint>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclecap/errors.hpp"
#include "cyclecap/features.hpp"
#include "cyclecap/nn.hpp"
#include "cyclecap/rng.hpp"

namespace cyclecap {

inline int feature_channels(FeatureKind k) { return is_freq_feature(k) ? 1 : 2; }

inline std::vector<FeatureKind> all_feature_kinds() {
  std::vector<FeatureKind> kinds;
  for (int k = 0; k < kNumFeatures; ++k) kinds.push_back(static_cast<FeatureKind>(k));
  return kinds;
}

// Topology parameters. The last filter count is the ConvAvgPool stage; every
// earlier one is a ConvMaxPool stage that halves the length.
struct CapConfig {
  int frame_length = 32768;
  int classes = 8;
  int kernel = 23;
  std::vector<int> filters{16, 24, 32, 48, 64, 96};
  std::vector<FeatureKind> kinds = all_feature_kinds();

  int halvings() const { return static_cast<int>(filters.size()) - 1; }

  void validate() const {
    if (classes < 2) throw std::invalid_argument("CapConfig: need at least 2 classes");
    if (kernel <= 0 || kernel % 2 == 0)
      throw std::invalid_argument("CapConfig: kernel length must be odd");
    if (filters.size() < 2)
      throw std::invalid_argument("CapConfig: need at least one pooled stage plus the head");
    for (int f : filters)
      if (f <= 0) throw std::invalid_argument("CapConfig: filter counts must be positive");
    if (kinds.empty()) throw std::invalid_argument("CapConfig: need at least one branch");
    for (std::size_t i = 0; i < kinds.size(); ++i)
      for (std::size_t j = i + 1; j < kinds.size(); ++j)
        if (kinds[i] == kinds[j])
          throw std::invalid_argument("CapConfig: duplicate branch feature kind");
    if (frame_length < 2 || (frame_length & (frame_length - 1)) != 0)
      throw std::invalid_argument("CapConfig: frame length must be a power of two");
    if (frame_length >> halvings() < 2)
      throw std::invalid_argument("CapConfig: frame length too short for the pooling ladder");
  }
};

namespace detail {

template <typename T>
void write_vec(std::ostream& os, const std::vector<T>& v) {
  const std::uint64_t n = v.size();
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(n * sizeof(T)));
}

template <typename T>
void read_vec(std::istream& is, std::vector<T>& v) {
  std::uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!is || n != v.size()) throw IoError("checkpoint tensor size mismatch");
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw IoError("checkpoint truncated");
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void read_pod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw IoError("checkpoint truncated");
}

}  // namespace detail

// Conv -> BatchNorm -> ReLU -> MaxPool(2).
template <typename T>
struct ConvMaxPool {
  nn::Conv1d<T> conv;
  nn::BatchNorm1d<T> bn;
  nn::ReLU<T> relu;
  nn::MaxPool2<T> pool;

  ConvMaxPool(int in_ch, int out_ch, int kernel)
      : conv(in_ch, out_ch, kernel), bn(out_ch) {}

  nn::Tensor<T> forward(const nn::Tensor<T>& x, bool train) {
    return pool.forward(relu.forward(bn.forward(conv.forward(x), train)));
  }
  nn::Tensor<T> backward(const nn::Tensor<T>& dy, bool need_dx = true) {
    return conv.backward(bn.backward(relu.backward(pool.backward(dy))), need_dx);
  }
  void init(Rng& rng) { conv.init_he(rng); }
  void zero_grad() {
    conv.zero_grad();
    bn.zero_grad();
  }
  std::vector<nn::ParamRef<T>> params(const std::string& prefix) {
    auto out = conv.params(prefix + ".conv");
    for (auto& p : bn.params(prefix + ".bn")) out.push_back(p);
    return out;
  }
  std::size_t parameter_count() const {
    return conv.parameter_count() + bn.parameter_count();
  }
  void save(std::ostream& os) const {
    detail::write_vec(os, conv.w_);
    detail::write_vec(os, conv.b_);
    detail::write_vec(os, bn.gamma_);
    detail::write_vec(os, bn.beta_);
    detail::write_vec(os, bn.running_mean_);
    detail::write_vec(os, bn.running_var_);
  }
  void load(std::istream& is) {
    detail::read_vec(is, conv.w_);
    detail::read_vec(is, conv.b_);
    detail::read_vec(is, bn.gamma_);
    detail::read_vec(is, bn.beta_);
    detail::read_vec(is, bn.running_mean_);
    detail::read_vec(is, bn.running_var_);
  }
};

// Conv -> BatchNorm -> ReLU -> global average: one value per channel.
template <typename T>
struct ConvAvgPool {
  nn::Conv1d<T> conv;
  nn::BatchNorm1d<T> bn;
  nn::ReLU<T> relu;
  nn::GlobalAvgPool<T> pool;

  ConvAvgPool(int in_ch, int out_ch, int kernel)
      : conv(in_ch, out_ch, kernel), bn(out_ch) {}

  nn::Tensor<T> forward(const nn::Tensor<T>& x, bool train) {
    return pool.forward(relu.forward(bn.forward(conv.forward(x), train)));
  }
  nn::Tensor<T> backward(const nn::Tensor<T>& dy) {
    return conv.backward(bn.backward(relu.backward(pool.backward(dy))));
  }
  void init(Rng& rng) { conv.init_he(rng); }
  void zero_grad() {
    conv.zero_grad();
    bn.zero_grad();
  }
  std::vector<nn::ParamRef<T>> params(const std::string& prefix) {
    auto out = conv.params(prefix + ".conv");
    for (auto& p : bn.params(prefix + ".bn")) out.push_back(p);
    return out;
  }
  std::size_t parameter_count() const {
    return conv.parameter_count() + bn.parameter_count();
  }
  void save(std::ostream& os) const {
    detail::write_vec(os, conv.w_);
    detail::write_vec(os, conv.b_);
    detail::write_vec(os, bn.gamma_);
    detail::write_vec(os, bn.beta_);
    detail::write_vec(os, bn.running_mean_);
    detail::write_vec(os, bn.running_var_);
  }
  void load(std::istream& is) {
    detail::read_vec(is, conv.w_);
    detail::read_vec(is, conv.b_);
    detail::read_vec(is, bn.gamma_);
    detail::read_vec(is, bn.beta_);
    detail::read_vec(is, bn.running_mean_);
    detail::read_vec(is, bn.running_var_);
  }
};

// One feature branch: pooled conv stages, an average-pool head, and a
// fully connected projection to class scores (passed raw into the concat).
template <typename T>
struct Branch {
  FeatureKind kind;
  std::vector<ConvMaxPool<T>> stages;
  ConvAvgPool<T> head;
  nn::Linear<T> fc;

  Branch(FeatureKind k, const CapConfig& cfg)
      : kind(k),
        stages(make_stages(k, cfg)),
        head(cfg.filters[cfg.filters.size() - 2], cfg.filters.back(), cfg.kernel),
        fc(cfg.filters.back(), cfg.classes) {}

  static std::vector<ConvMaxPool<T>> make_stages(FeatureKind k, const CapConfig& cfg) {
    std::vector<ConvMaxPool<T>> out;
    int in_ch = feature_channels(k);
    for (int i = 0; i + 1 < static_cast<int>(cfg.filters.size()); ++i) {
      out.emplace_back(in_ch, cfg.filters[i], cfg.kernel);
      in_ch = cfg.filters[i];
    }
    return out;
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& x, bool train) {
    if (x.channels != feature_channels(kind))
      throw std::invalid_argument("Branch: input channel count does not match feature kind");
    nn::Tensor<T> h = x;
    for (auto& s : stages) h = s.forward(h, train);
    h = head.forward(h, train);
    return fc.forward(h);
  }

  void backward(const nn::Tensor<T>& dy) {
    nn::Tensor<T> g = fc.backward(dy);
    g = head.backward(g);
    for (std::size_t i = stages.size(); i-- > 0;)
      g = stages[i].backward(g, /*need_dx=*/i > 0);
  }

  void init(Rng& rng) {
    for (auto& s : stages) s.init(rng);
    head.init(rng);
    fc.init_he(rng);
  }
  void zero_grad() {
    for (auto& s : stages) s.zero_grad();
    head.zero_grad();
    fc.zero_grad();
  }
  std::vector<nn::ParamRef<T>> params(const std::string& prefix) {
    std::vector<nn::ParamRef<T>> out;
    for (std::size_t i = 0; i < stages.size(); ++i)
      for (auto& p : stages[i].params(prefix + ".stage" + std::to_string(i)))
        out.push_back(p);
    for (auto& p : head.params(prefix + ".head")) out.push_back(p);
    for (auto& p : fc.params(prefix + ".fc")) out.push_back(p);
    return out;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& s : stages) n += s.parameter_count();
    return n + head.parameter_count() + fc.parameter_count();
  }
  void save(std::ostream& os) const {
    for (const auto& s : stages) s.save(os);
    head.save(os);
    detail::write_vec(os, fc.w_);
    detail::write_vec(os, fc.b_);
  }
  void load(std::istream& is) {
    for (auto& s : stages) s.load(is);
    head.load(is);
    detail::read_vec(is, fc.w_);
    detail::read_vec(is, fc.b_);
  }
};

// The full multi-branch network: one branch per feature kind, class scores
// concatenated and mixed by a final fully connected layer.
template <typename T>
class CapNetwork {
 public:
  explicit CapNetwork(CapConfig cfg = {}) : cfg_(std::move(cfg)), final_fc_(1, 1) {
    cfg_.validate();
    for (FeatureKind k : cfg_.kinds) branches_.emplace_back(k, cfg_);
    final_fc_ = nn::Linear<T>(static_cast<int>(branches_.size()) * cfg_.classes,
                              cfg_.classes);
  }

  const CapConfig& config() const { return cfg_; }
  int classes() const { return cfg_.classes; }
  int frame_length() const { return cfg_.frame_length; }
  std::size_t num_branches() const { return branches_.size(); }

  void init(Rng& rng) {
    for (auto& b : branches_) b.init(rng);
    final_fc_.init_he(rng);
  }

  // inputs[i] feeds branch i; returns logits [batch, 1, classes].
  nn::Tensor<T> forward(const std::vector<nn::Tensor<T>>& inputs, bool train) {
    if (inputs.size() != branches_.size())
      throw std::invalid_argument("CapNetwork: one input per branch required");
    const int batch = inputs[0].batch;
    nn::Tensor<T> concat(batch, 1, static_cast<int>(branches_.size()) * cfg_.classes);
    for (std::size_t i = 0; i < branches_.size(); ++i) {
      if (inputs[i].length != cfg_.frame_length || inputs[i].batch != batch)
        throw std::invalid_argument("CapNetwork: input shape mismatch");
      nn::Tensor<T> out = branches_[i].forward(inputs[i], train);
      for (int b = 0; b < batch; ++b)
        for (int c = 0; c < cfg_.classes; ++c)
          concat.at(b, 0, static_cast<int>(i) * cfg_.classes + c) = out.at(b, 0, c);
    }
    return final_fc_.forward(concat);
  }

  void backward(const nn::Tensor<T>& dlogits) {
    nn::Tensor<T> dconcat = final_fc_.backward(dlogits);
    for (std::size_t i = 0; i < branches_.size(); ++i) {
      nn::Tensor<T> slice(dconcat.batch, 1, cfg_.classes);
      for (int b = 0; b < dconcat.batch; ++b)
        for (int c = 0; c < cfg_.classes; ++c)
          slice.at(b, 0, c) = dconcat.at(b, 0, static_cast<int>(i) * cfg_.classes + c);
      branches_[i].backward(slice);
    }
  }

  // Single-frame inference on an extracted feature set; softmax probabilities.
  std::vector<double> predict(const FeatureSet& features) {
    std::vector<nn::Tensor<T>> xs;
    xs.reserve(branches_.size());
    for (const auto& b : branches_) {
      const FeatureTensor& f = features[static_cast<int>(b.kind)];
      if (f.kind != b.kind)
        throw std::invalid_argument("CapNetwork: feature/branch kind mismatch");
      if (f.length != cfg_.frame_length || f.channels != feature_channels(b.kind))
        throw std::invalid_argument("CapNetwork: feature tensor shape mismatch");
      nn::Tensor<T> x(1, f.length, f.channels);
      for (std::size_t j = 0; j < f.data.size(); ++j)
        x.data[j] = static_cast<T>(f.data[j]);
      xs.push_back(std::move(x));
    }
    nn::Tensor<T> logits = forward(xs, false);
    std::vector<double> probs(cfg_.classes);
    double mx = logits.data[0];
    for (int c = 1; c < cfg_.classes; ++c)
      mx = std::max(mx, static_cast<double>(logits.data[c]));
    double denom = 0.0;
    for (int c = 0; c < cfg_.classes; ++c) {
      probs[c] = std::exp(static_cast<double>(logits.data[c]) - mx);
      denom += probs[c];
    }
    for (auto& p : probs) p /= denom;
    return probs;
  }

  void zero_grad() {
    for (auto& b : branches_) b.zero_grad();
    final_fc_.zero_grad();
  }

  std::vector<nn::ParamRef<T>> params() {
    std::vector<nn::ParamRef<T>> out;
    for (std::size_t i = 0; i < branches_.size(); ++i)
      for (auto& p : branches_[i].params("branch" + std::to_string(i)))
        out.push_back(p);
    for (auto& p : final_fc_.params("final_fc")) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = final_fc_.parameter_count();
    for (const auto& b : branches_) n += b.parameter_count();
    return n;
  }
  std::size_t branch_parameter_count(std::size_t i) const {
    return branches_.at(i).parameter_count();
  }

  void save(std::ostream& os) const {
    detail::write_pod(os, static_cast<std::uint8_t>(sizeof(T)));
    detail::write_pod(os, static_cast<std::int32_t>(cfg_.frame_length));
    detail::write_pod(os, static_cast<std::int32_t>(cfg_.classes));
    detail::write_pod(os, static_cast<std::int32_t>(cfg_.kernel));
    detail::write_pod(os, static_cast<std::uint32_t>(cfg_.filters.size()));
    for (int f : cfg_.filters) detail::write_pod(os, static_cast<std::int32_t>(f));
    detail::write_pod(os, static_cast<std::uint32_t>(cfg_.kinds.size()));
    for (FeatureKind k : cfg_.kinds)
      detail::write_pod(os, static_cast<std::uint8_t>(k));
    for (const auto& b : branches_) b.save(os);
    detail::write_vec(os, final_fc_.w_);
    detail::write_vec(os, final_fc_.b_);
    if (!os) throw IoError("checkpoint write failed");
  }

  static CapNetwork<T> load(std::istream& is) {
    std::uint8_t dtype = 0;
    detail::read_pod(is, dtype);
    if (dtype != sizeof(T)) throw IoError("checkpoint precision mismatch");
    CapConfig cfg;
    std::int32_t v = 0;
    detail::read_pod(is, v);
    cfg.frame_length = v;
    detail::read_pod(is, v);
    cfg.classes = v;
    detail::read_pod(is, v);
    cfg.kernel = v;
    std::uint32_t n = 0;
    detail::read_pod(is, n);
    cfg.filters.assign(n, 0);
    for (auto& f : cfg.filters) {
      detail::read_pod(is, v);
      f = v;
    }
    detail::read_pod(is, n);
    cfg.kinds.clear();
    for (std::uint32_t i = 0; i < n; ++i) {
      std::uint8_t k = 0;
      detail::read_pod(is, k);
      if (k >= kNumFeatures) throw IoError("checkpoint has an unknown feature kind");
      cfg.kinds.push_back(static_cast<FeatureKind>(k));
    }
    CapNetwork<T> net(cfg);
    for (auto& b : net.branches_) b.load(is);
    detail::read_vec(is, net.final_fc_.w_);
    detail::read_vec(is, net.final_fc_.b_);
    return net;
  }

  // Layer table with per-branch activation shapes and parameter counts.
  std::string describe() const {
    std::ostringstream os;
    const auto row = [&os](const std::string& layer, const std::string& filt,
                           const std::string& act) {
      os << std::left << std::setw(14) << layer << std::setw(26) << filt << act
         << '\n';
    };
    for (std::size_t i = 0; i < branches_.size(); ++i) {
      const Branch<T>& b = branches_[i];
      os << "Branch " << i << ": " << feature_name(b.kind) << '\n';
      row("Layer", "(# Filters)[Filter Size]", "Activations");
      int length = cfg_.frame_length;
      int ch = feature_channels(b.kind);
      row("Input", "", std::to_string(length) + " x " + std::to_string(ch));
      for (const auto& s : b.stages) {
        length /= 2;
        row("ConvMaxPool",
            "(" + std::to_string(s.conv.out_channels()) + ")[" +
                std::to_string(cfg_.kernel) + " x " + std::to_string(ch) + "]",
            std::to_string(length) + " x " + std::to_string(s.conv.out_channels()));
        ch = s.conv.out_channels();
      }
      row("ConvAvgPool",
          "(" + std::to_string(b.head.conv.out_channels()) + ")[" +
              std::to_string(cfg_.kernel) + " x " + std::to_string(ch) + "]",
          std::to_string(b.head.conv.out_channels()));
      row("FC", "", std::to_string(cfg_.classes));
      os << "Parameters: " << b.parameter_count() << '\n' << '\n';
    }
    os << "Concat: " << branches_.size() * cfg_.classes << '\n';
    os << "FC: " << cfg_.classes << '\n';
    os << "Total parameters: " << parameter_count() << '\n';
    return os.str();
  }

  std::vector<Branch<T>> branches_;
  nn::Linear<T> final_fc_;

 private:
  CapConfig cfg_;
};

inline CapNetwork<float> build_cap(int frame_length = 32768, int classes = 8) {
  CapConfig cfg;
  cfg.frame_length = frame_length;
  cfg.classes = classes;
  return CapNetwork<float>(cfg);
}

}  // namespace cyclecap
