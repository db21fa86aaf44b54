#include "cyclecap/nn.hpp"

#include <algorithm>
#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace cyclecap::nn {

namespace {
bool g_debug_nan_checks = false;
}

void set_debug_nan_checks(bool enabled) { g_debug_nan_checks = enabled; }
bool debug_nan_checks() { return g_debug_nan_checks; }

void set_blas_threads(int n) { openblas_set_num_threads(n); }

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta, float* c,
          int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

GradCheckResult grad_check(const std::function<double()>& loss_fn,
                           const std::vector<ParamRef<double>>& params,
                           const GradCheckOptions& opts) {
  if (opts.tolerance <= 0.0)
    throw std::invalid_argument("grad_check: tolerance must be positive");
  for (const auto& p : params) {
    if (p.value == nullptr || p.grad == nullptr || p.value->size() != p.grad->size())
      throw std::invalid_argument("grad_check: malformed parameter reference");
  }

  loss_fn();  // fill analytic gradients at the base point
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  std::size_t total = 0;
  for (const auto& p : params) {
    analytic.push_back(*p.grad);
    total += p.grad->size();
  }

  // (block, index) probe list; subsample deterministically when capped
  std::vector<std::pair<std::size_t, std::size_t>> probes;
  if (opts.max_checked == 0 || total <= opts.max_checked) {
    probes.reserve(total);
    for (std::size_t bi = 0; bi < params.size(); ++bi)
      for (std::size_t i = 0; i < params[bi].value->size(); ++i) probes.emplace_back(bi, i);
  } else {
    Rng rng(opts.probe_seed);
    std::vector<std::size_t> offsets(params.size() + 1, 0);
    for (std::size_t bi = 0; bi < params.size(); ++bi)
      offsets[bi + 1] = offsets[bi] + params[bi].value->size();
    std::vector<std::size_t> flat;
    while (flat.size() < opts.max_checked) {
      const std::size_t idx =
          static_cast<std::size_t>(rng.uniform() * static_cast<double>(total));
      if (idx >= total || std::find(flat.begin(), flat.end(), idx) != flat.end())
        continue;
      flat.push_back(idx);
    }
    for (std::size_t idx : flat) {
      std::size_t bi = 0;
      while (offsets[bi + 1] <= idx) ++bi;
      probes.emplace_back(bi, idx - offsets[bi]);
    }
  }

  GradCheckResult res;
  for (const auto& [bi, i] : probes) {
    double& theta = (*params[bi].value)[i];
    const double saved = theta;
    const double h = 1e-5 * std::max(1.0, std::abs(saved));
    theta = saved + h;
    const double lp = loss_fn();
    theta = saved - h;
    const double lm = loss_fn();
    theta = saved;
    const double numeric = (lp - lm) / (2.0 * h);
    const double a = analytic[bi][i];
    const double rel = std::abs(a - numeric) /
                       std::max({std::abs(a), std::abs(numeric), opts.denom_floor});
    ++res.checked;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_name = params[bi].name + "[" + std::to_string(i) + "]";
      res.worst_analytic = a;
      res.worst_numeric = numeric;
    }
  }
  loss_fn();  // leave gradients consistent with the restored parameters
  res.passed = res.max_rel_err < opts.tolerance;
  return res;
}

}  // namespace cyclecap::nn
