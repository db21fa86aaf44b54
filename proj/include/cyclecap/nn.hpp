#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cyclecap/errors.hpp"
#include "cyclecap/rng.hpp"

namespace cyclecap::nn {

// Row-major C = alpha * op(A) [m x k] * op(B) [k x n] + beta * C. BLAS-backed.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta, float* c,
          int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);
void set_blas_threads(int n);

// When enabled, every layer output is scanned for non-finite values.
void set_debug_nan_checks(bool enabled);
bool debug_nan_checks();

// (batch, length, channels), channel-fastest.
template <typename T>
struct Tensor {
  int batch = 0;
  int length = 0;
  int channels = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int b, int l, int c)
      : batch(b), length(l), channels(c), data(checked_size(b, l, c), T(0)) {}

  static std::size_t checked_size(int b, int l, int c) {
    if (b <= 0 || l <= 0 || c <= 0)
      throw std::invalid_argument("Tensor: dimensions must be positive");
    return static_cast<std::size_t>(b) * l * c;
  }

  std::size_t size() const { return data.size(); }
  T& at(int b, int l, int c) {
    return data[(static_cast<std::size_t>(b) * length + l) * channels + c];
  }
  const T& at(int b, int l, int c) const {
    return data[(static_cast<std::size_t>(b) * length + l) * channels + c];
  }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

template <typename T>
void check_finite(const Tensor<T>& t, const char* where) {
  if (debug_nan_checks() && !t.all_finite())
    throw NumericError(std::string("non-finite values after ") + where);
}

// One named parameter tensor and its gradient slot.
template <typename T>
struct ParamRef {
  std::vector<T>* value = nullptr;
  std::vector<T>* grad = nullptr;
  std::string name;
};

// --------------------------------------------------------------------------
// Conv1d: stride-1 same-padding 1-D convolution, im2col + one GEMM per
// sample. Weights are [kernel*in_channels, out_channels] row-major so the
// im2col matrix multiplies them directly.
template <typename T>
class Conv1d {
 public:
  Conv1d(int in_channels, int out_channels, int kernel = 23, int stride = 1)
      : ci_(in_channels), co_(out_channels), k_(kernel) {
    if (ci_ <= 0 || co_ <= 0) throw std::invalid_argument("Conv1d: bad channel counts");
    if (k_ <= 0 || k_ % 2 == 0)
      throw std::invalid_argument("Conv1d: kernel length must be odd and positive");
    if (stride != 1) throw std::invalid_argument("Conv1d: only stride 1 is supported");
    w_.assign(static_cast<std::size_t>(k_) * ci_ * co_, T(0));
    b_.assign(static_cast<std::size_t>(co_), T(0));
    dw_.assign(w_.size(), T(0));
    db_.assign(b_.size(), T(0));
  }

  void init_he(Rng& rng) {
    const double std = std::sqrt(2.0 / (static_cast<double>(k_) * ci_));
    for (auto& v : w_) v = static_cast<T>(std * rng.gaussian());
    for (auto& v : b_) v = T(0);
  }

  // weight layout accessor: filter co, tap k, input channel ci
  T& weight(int co, int k, int ci) {
    return w_[(static_cast<std::size_t>(k) * ci_ + ci) * co_ + co];
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.channels != ci_) throw std::invalid_argument("Conv1d: input channel mismatch");
    x_ = x;
    Tensor<T> y(x.batch, x.length, co_);
    const int rows = x.length;
    const int cols = k_ * ci_;
    col_.assign(static_cast<std::size_t>(rows) * cols, T(0));
    for (int b = 0; b < x.batch; ++b) {
      im2col(x, b);
      gemm(false, false, rows, co_, cols, T(1), col_.data(), cols, w_.data(), co_,
           T(0), &y.at(b, 0, 0), co_);
      for (int l = 0; l < rows; ++l)
        for (int c = 0; c < co_; ++c) y.at(b, l, c) += b_[c];
    }
    check_finite(y, "Conv1d::forward");
    return y;
  }

  // need_dx=false skips the input-gradient pass (first layer of a network).
  Tensor<T> backward(const Tensor<T>& dy, bool need_dx = true) {
    if (dy.batch != x_.batch || dy.length != x_.length || dy.channels != co_)
      throw std::invalid_argument("Conv1d: gradient shape mismatch");
    const int rows = x_.length;
    const int cols = k_ * ci_;
    const int pad = k_ / 2;
    Tensor<T> dx;
    if (need_dx) {
      dx = Tensor<T>(x_.batch, x_.length, ci_);
      dcol_.assign(static_cast<std::size_t>(rows) * cols, T(0));
    }
    for (int b = 0; b < x_.batch; ++b) {
      im2col(x_, b);
      // dW += col^T [cols x rows] * dY [rows x co]
      gemm(true, false, cols, co_, rows, T(1), col_.data(), cols,
           &dy.at(b, 0, 0), co_, T(1), dw_.data(), co_);
      for (int l = 0; l < rows; ++l)
        for (int c = 0; c < co_; ++c) db_[c] += dy.at(b, l, c);
      if (!need_dx) continue;
      // dCol = dY [rows x co] * W^T [co x cols]
      gemm(false, true, rows, cols, co_, T(1), &dy.at(b, 0, 0), co_, w_.data(),
           co_, T(0), dcol_.data(), cols);
      for (int l = 0; l < rows; ++l) {
        const T* src = &dcol_[static_cast<std::size_t>(l) * cols];
        for (int k = 0; k < k_; ++k) {
          const int sl = l + k - pad;
          if (sl < 0 || sl >= rows) continue;
          T* dst = &dx.at(b, sl, 0);
          const T* s = src + static_cast<std::size_t>(k) * ci_;
          for (int c = 0; c < ci_; ++c) dst[c] += s[c];
        }
      }
    }
    if (need_dx) check_finite(dx, "Conv1d::backward");
    return dx;
  }

  void zero_grad() {
    std::fill(dw_.begin(), dw_.end(), T(0));
    std::fill(db_.begin(), db_.end(), T(0));
  }

  std::vector<ParamRef<T>> params(const std::string& prefix) {
    return {{&w_, &dw_, prefix + ".w"}, {&b_, &db_, prefix + ".b"}};
  }

  int in_channels() const { return ci_; }
  int out_channels() const { return co_; }
  int kernel() const { return k_; }
  std::size_t parameter_count() const { return w_.size() + b_.size(); }

  std::vector<T> w_, b_, dw_, db_;

 private:
  void im2col(const Tensor<T>& x, int b) {
    const int rows = x.length;
    const int cols = k_ * ci_;
    const int pad = k_ / 2;
    for (int l = 0; l < rows; ++l) {
      T* dst = &col_[static_cast<std::size_t>(l) * cols];
      for (int k = 0; k < k_; ++k) {
        const int sl = l + k - pad;
        T* d = dst + static_cast<std::size_t>(k) * ci_;
        if (sl < 0 || sl >= rows) {
          for (int c = 0; c < ci_; ++c) d[c] = T(0);
        } else {
          const T* s = &x.at(b, sl, 0);
          for (int c = 0; c < ci_; ++c) d[c] = s[c];
        }
      }
    }
  }

  int ci_, co_, k_;
  Tensor<T> x_;
  std::vector<T> col_, dcol_;
};

// --------------------------------------------------------------------------
// BatchNorm over batch x length per channel; biased variance everywhere.
template <typename T>
class BatchNorm1d {
 public:
  explicit BatchNorm1d(int channels, T momentum = T(0.9), T eps = T(1e-5))
      : c_(channels), momentum_(momentum), eps_(eps) {
    if (c_ <= 0) throw std::invalid_argument("BatchNorm1d: bad channel count");
    gamma_.assign(c_, T(1));
    beta_.assign(c_, T(0));
    running_mean_.assign(c_, T(0));
    running_var_.assign(c_, T(1));
    dgamma_.assign(c_, T(0));
    dbeta_.assign(c_, T(0));
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (x.channels != c_) throw std::invalid_argument("BatchNorm1d: channel mismatch");
    Tensor<T> y(x.batch, x.length, x.channels);
    if (train) {
      if (x.batch < 2)
        throw std::invalid_argument("BatchNorm1d: train mode needs batch size >= 2");
      const std::size_t m = static_cast<std::size_t>(x.batch) * x.length;
      mean_.assign(c_, T(0));
      inv_std_.assign(c_, T(0));
      std::vector<T> var(c_, T(0));
      for (std::size_t i = 0; i < m; ++i)
        for (int c = 0; c < c_; ++c) mean_[c] += x.data[i * c_ + c];
      for (int c = 0; c < c_; ++c) mean_[c] /= static_cast<T>(m);
      for (std::size_t i = 0; i < m; ++i)
        for (int c = 0; c < c_; ++c) {
          const T d = x.data[i * c_ + c] - mean_[c];
          var[c] += d * d;
        }
      for (int c = 0; c < c_; ++c) {
        var[c] /= static_cast<T>(m);
        inv_std_[c] = T(1) / std::sqrt(var[c] + eps_);
        running_mean_[c] = momentum_ * running_mean_[c] + (T(1) - momentum_) * mean_[c];
        running_var_[c] = momentum_ * running_var_[c] + (T(1) - momentum_) * var[c];
      }
      xhat_ = Tensor<T>(x.batch, x.length, x.channels);
      for (std::size_t i = 0; i < m; ++i)
        for (int c = 0; c < c_; ++c) {
          const T h = (x.data[i * c_ + c] - mean_[c]) * inv_std_[c];
          xhat_.data[i * c_ + c] = h;
          y.data[i * c_ + c] = gamma_[c] * h + beta_[c];
        }
    } else {
      const std::size_t m = static_cast<std::size_t>(x.batch) * x.length;
      for (std::size_t i = 0; i < m; ++i)
        for (int c = 0; c < c_; ++c) {
          const T h = (x.data[i * c_ + c] - running_mean_[c]) /
                      std::sqrt(running_var_[c] + eps_);
          y.data[i * c_ + c] = gamma_[c] * h + beta_[c];
        }
    }
    check_finite(y, "BatchNorm1d::forward");
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (dy.batch != xhat_.batch || dy.length != xhat_.length || dy.channels != c_)
      throw std::invalid_argument("BatchNorm1d: gradient shape mismatch");
    const std::size_t m = static_cast<std::size_t>(dy.batch) * dy.length;
    std::vector<T> sum_dy(c_, T(0)), sum_dy_xhat(c_, T(0));
    for (std::size_t i = 0; i < m; ++i)
      for (int c = 0; c < c_; ++c) {
        const T g = dy.data[i * c_ + c];
        sum_dy[c] += g;
        sum_dy_xhat[c] += g * xhat_.data[i * c_ + c];
      }
    for (int c = 0; c < c_; ++c) {
      dbeta_[c] += sum_dy[c];
      dgamma_[c] += sum_dy_xhat[c];
    }
    Tensor<T> dx(dy.batch, dy.length, c_);
    const T inv_m = T(1) / static_cast<T>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (int c = 0; c < c_; ++c) {
        const T g = dy.data[i * c_ + c];
        dx.data[i * c_ + c] =
            gamma_[c] * inv_std_[c] *
            (g - inv_m * sum_dy[c] - xhat_.data[i * c_ + c] * inv_m * sum_dy_xhat[c]);
      }
    check_finite(dx, "BatchNorm1d::backward");
    return dx;
  }

  void zero_grad() {
    std::fill(dgamma_.begin(), dgamma_.end(), T(0));
    std::fill(dbeta_.begin(), dbeta_.end(), T(0));
  }

  std::vector<ParamRef<T>> params(const std::string& prefix) {
    return {{&gamma_, &dgamma_, prefix + ".gamma"}, {&beta_, &dbeta_, prefix + ".beta"}};
  }

  int channels() const { return c_; }
  std::size_t parameter_count() const { return gamma_.size() + beta_.size(); }

  std::vector<T> gamma_, beta_, running_mean_, running_var_, dgamma_, dbeta_;

 private:
  int c_;
  T momentum_, eps_;
  std::vector<T> mean_, inv_std_;
  Tensor<T> xhat_;
};

// --------------------------------------------------------------------------
template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y(x.batch, x.length, x.channels);
    mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x.data[i] > T(0)) {
        y.data[i] = x.data[i];
        mask_[i] = 1;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (dy.size() != mask_.size()) throw std::invalid_argument("ReLU: gradient shape mismatch");
    Tensor<T> dx(dy.batch, dy.length, dy.channels);
    for (std::size_t i = 0; i < dy.size(); ++i) dx.data[i] = mask_[i] ? dy.data[i] : T(0);
    return dx;
  }

 private:
  std::vector<std::uint8_t> mask_;
};

// Window 2, stride 2; rejects odd lengths (every length in the reference
// ladder is even).
template <typename T>
class MaxPool2 {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    if (x.length % 2 != 0)
      throw std::invalid_argument("MaxPool2: input length must be even");
    Tensor<T> y(x.batch, x.length / 2, x.channels);
    arg_.assign(y.size(), 0);
    for (int b = 0; b < x.batch; ++b)
      for (int l = 0; l < y.length; ++l)
        for (int c = 0; c < x.channels; ++c) {
          const T a = x.at(b, 2 * l, c);
          const T d = x.at(b, 2 * l + 1, c);
          const bool second = d > a;
          y.at(b, l, c) = second ? d : a;
          arg_[(static_cast<std::size_t>(b) * y.length + l) * x.channels + c] =
              second ? 1 : 0;
        }
    in_length_ = x.length;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (dy.size() != arg_.size()) throw std::invalid_argument("MaxPool2: gradient shape mismatch");
    Tensor<T> dx(dy.batch, in_length_, dy.channels);
    for (int b = 0; b < dy.batch; ++b)
      for (int l = 0; l < dy.length; ++l)
        for (int c = 0; c < dy.channels; ++c) {
          const int off =
              arg_[(static_cast<std::size_t>(b) * dy.length + l) * dy.channels + c];
          dx.at(b, 2 * l + off, c) = dy.at(b, l, c);
        }
    return dx;
  }

 private:
  std::vector<std::uint8_t> arg_;
  int in_length_ = 0;
};

// Average over the full remaining length: one value per channel.
template <typename T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y(x.batch, 1, x.channels);
    for (int b = 0; b < x.batch; ++b)
      for (int l = 0; l < x.length; ++l)
        for (int c = 0; c < x.channels; ++c) y.at(b, 0, c) += x.at(b, l, c);
    const T inv = T(1) / static_cast<T>(x.length);
    for (auto& v : y.data) v *= inv;
    in_length_ = x.length;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.batch, in_length_, dy.channels);
    const T inv = T(1) / static_cast<T>(in_length_);
    for (int b = 0; b < dy.batch; ++b)
      for (int l = 0; l < in_length_; ++l)
        for (int c = 0; c < dy.channels; ++c) dx.at(b, l, c) = dy.at(b, 0, c) * inv;
    return dx;
  }

 private:
  int in_length_ = 0;
};

// --------------------------------------------------------------------------
// Fully connected over the flattened (length*channels) axis.
template <typename T>
class Linear {
 public:
  Linear(int in_dim, int out_dim) : d_(in_dim), o_(out_dim) {
    if (d_ <= 0 || o_ <= 0) throw std::invalid_argument("Linear: bad dimensions");
    w_.assign(static_cast<std::size_t>(d_) * o_, T(0));
    b_.assign(o_, T(0));
    dw_.assign(w_.size(), T(0));
    db_.assign(b_.size(), T(0));
  }

  void init_he(Rng& rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(d_));
    for (auto& v : w_) v = static_cast<T>(std * rng.gaussian());
    for (auto& v : b_) v = T(0);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.length * x.channels != d_)
      throw std::invalid_argument("Linear: flattened input dimension mismatch");
    x_ = x;
    Tensor<T> y(x.batch, 1, o_);
    gemm(false, false, x.batch, o_, d_, T(1), x.data.data(), d_, w_.data(), o_,
         T(0), y.data.data(), o_);
    for (int b = 0; b < x.batch; ++b)
      for (int c = 0; c < o_; ++c) y.at(b, 0, c) += b_[c];
    check_finite(y, "Linear::forward");
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (dy.batch != x_.batch || dy.length * dy.channels != o_)
      throw std::invalid_argument("Linear: gradient shape mismatch");
    // dW += x^T [d x batch] * dY [batch x o]
    gemm(true, false, d_, o_, x_.batch, T(1), x_.data.data(), d_, dy.data.data(),
         o_, T(1), dw_.data(), o_);
    for (int b = 0; b < dy.batch; ++b)
      for (int c = 0; c < o_; ++c) db_[c] += dy.at(b, 0, c);
    Tensor<T> dx(x_.batch, x_.length, x_.channels);
    gemm(false, true, x_.batch, d_, o_, T(1), dy.data.data(), o_, w_.data(), o_,
         T(0), dx.data.data(), d_);
    check_finite(dx, "Linear::backward");
    return dx;
  }

  void zero_grad() {
    std::fill(dw_.begin(), dw_.end(), T(0));
    std::fill(db_.begin(), db_.end(), T(0));
  }

  std::vector<ParamRef<T>> params(const std::string& prefix) {
    return {{&w_, &dw_, prefix + ".w"}, {&b_, &db_, prefix + ".b"}};
  }

  T& weight(int in, int out) { return w_[static_cast<std::size_t>(in) * o_ + out]; }
  int in_dim() const { return d_; }
  int out_dim() const { return o_; }
  std::size_t parameter_count() const { return w_.size() + b_.size(); }

  std::vector<T> w_, b_, dw_, db_;

 private:
  int d_, o_;
  Tensor<T> x_;
};

// --------------------------------------------------------------------------
// Mean softmax cross-entropy over the batch; gradient is (p - onehot)/batch.
template <typename T>
struct SoftmaxXent {
  T loss = T(0);
  Tensor<T> probs;  // [batch, 1, classes]
  Tensor<T> grad;   // same shape
};

template <typename T>
SoftmaxXent<T> softmax_xent(const Tensor<T>& logits, const std::vector<int>& labels) {
  const int classes = logits.length * logits.channels;
  if (static_cast<int>(labels.size()) != logits.batch)
    throw std::invalid_argument("softmax_xent: one label per batch row required");
  SoftmaxXent<T> out;
  out.probs = Tensor<T>(logits.batch, 1, classes);
  out.grad = Tensor<T>(logits.batch, 1, classes);
  double total = 0.0;
  for (int b = 0; b < logits.batch; ++b) {
    const int y = labels[b];
    if (y < 0 || y >= classes)
      throw std::invalid_argument("softmax_xent: label out of range");
    const T* row = &logits.data[static_cast<std::size_t>(b) * classes];
    T mx = row[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (int c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
    const double lse = static_cast<double>(mx) + std::log(denom);
    total += lse - static_cast<double>(row[y]);
    for (int c = 0; c < classes; ++c) {
      const double p = std::exp(static_cast<double>(row[c]) - lse);
      out.probs.at(b, 0, c) = static_cast<T>(p);
      out.grad.at(b, 0, c) =
          static_cast<T>((p - (c == y ? 1.0 : 0.0)) / logits.batch);
    }
  }
  out.loss = static_cast<T>(total / logits.batch);
  return out;
}

// --------------------------------------------------------------------------
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<T> m, v;
  std::int64_t t = 0;
};

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& st,
               const AdamConfig& cfg) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: parameter/gradient size mismatch");
  if (st.m.empty()) {
    st.m.assign(params.size(), T(0));
    st.v.assign(params.size(), T(0));
  }
  if (st.m.size() != params.size())
    throw std::invalid_argument("adam_step: state size mismatch");
  ++st.t;
  const double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    const double m = cfg.beta1 * static_cast<double>(st.m[i]) + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * static_cast<double>(st.v[i]) + (1.0 - cfg.beta2) * g * g;
    st.m[i] = static_cast<T>(m);
    st.v[i] = static_cast<T>(v);
    const double mhat = m / b1t;
    const double vhat = v / b2t;
    params[i] = static_cast<T>(static_cast<double>(params[i]) -
                               cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

// --------------------------------------------------------------------------
// Central-difference verification of analytic gradients. loss_fn must run
// forward and backward, refresh every grad buffer named in params, and
// return the loss.
struct GradCheckOptions {
  double tolerance = 1e-4;
  std::size_t max_checked = 0;  // 0 = every parameter
  std::uint64_t probe_seed = 1;
  // Relative-error denominator floor. Central differences carry an absolute
  // noise of roughly |loss|*eps/h ~ 1e-11, so gradients that are genuinely
  // ~0 (e.g. a bias immediately followed by batchnorm) are compared in
  // absolute terms against this scale instead.
  double denom_floor = 1e-6;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst_name;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

GradCheckResult grad_check(const std::function<double()>& loss_fn,
                           const std::vector<ParamRef<double>>& params,
                           const GradCheckOptions& opts = {});

}  // namespace cyclecap::nn
