#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "accordion/model.hpp"
#include "accordion/simulator.hpp"
#include "accordion/tensor.hpp"

namespace accordion {

// Instance of the sparse-mean / dense-noise gradient model: two-Gaussian
// features x ~ N(+-mu, sigma^2 I) with matching +-1 labels, squared loss with
// an L1 penalty, gradient taken at the sparse point w.
struct LemmaParams {
  Tensor mu;             // d x 1, k1-sparse
  Tensor w;              // d x 1, k2-sparse
  double lambda = 0.1;
  double sigma = 0.1;
  double gamma_min = 0.0;  // 0 -> smallest nonzero magnitude of the exact mean
  std::size_t n = 1000;    // samples per batch
  double epsilon = 0.05;   // target tail probability
  std::size_t trials = 200;
  std::uint64_t seed = 7;
};

// Closed-form expected gradient driving the sparsity claim:
//   w + lambda * sign(w) + mu (mu^T w).
Tensor expected_lasso_grad(const LemmaParams& p);

// Exact mean of the sampled stochastic gradient under the labeled mixture:
//   sigma^2 w + mu (mu^T w) - mu + lambda * sign(w).
// The deviation tail is measured against this vector so it vanishes with
// sigma.
Tensor lasso_grad_exact_mean(const LemmaParams& p);

// One stochastic gradient x (x^T w) - x y + lambda sign(w) at a fresh sample.
Tensor sample_lasso_grad(const LemmaParams& p, Rng& rng);

struct LemmaReport {
  std::size_t support_size = 0;   // nnz of expected_lasso_grad
  std::size_t k1 = 0, k2 = 0;
  double gamma = 0.0;
  // Fraction of batches of n samples whose max coordinate deviation from the
  // exact mean reaches gamma.
  double empirical_tail = 0.0;
  // n * d * ((sigma^4 + 2 mu_max^2 sigma^2) ||w||^2 + sigma^2) / gamma^2.
  double chebyshev_bound = 0.0;
  // Sharper per-coordinate version of the same pair.
  double per_coord_tail = 0.0;
  double per_coord_bound = 0.0;
};

LemmaReport lemma_montecarlo(const LemmaParams& p);

// Mean pairwise overlap of the top-ceil(K d) magnitude supports, subsampled
// to at most 10^4 pairs.
double topk_overlap(const std::vector<Tensor>& grads, double k_fraction,
                    std::uint64_t seed = 1);

// Hessian-vector product by central differences of the gradient,
// h = 1e-4 ||w|| / ||v|| (falling back to 1e-4 / ||v|| near the origin).
Tensor hessian_vector_product(const Model& model, const Dataset& data,
                              const Tensor& v_flat);

struct EigEstimate {
  double value = 0.0;
  bool converged = false;
};

// Top-k Hessian eigenvalues by power iteration with deflation.
std::vector<EigEstimate> hessian_top_eigs(const Model& model,
                                          const Dataset& data, std::size_t k,
                                          std::uint64_t seed = 11);

// Per-checkpoint traces for a sequence of model snapshots.
std::vector<std::vector<EigEstimate>> hessian_top_eigs(
    const Model& model_shape, const Dataset& data, std::size_t k,
    const std::vector<Model>& checkpoints, std::uint64_t seed = 11);

// Epochs covered by any window [e, e+window] whose endpoints change by at
// least eta relative to the window start.
std::set<std::size_t> critical_trace(const std::vector<double>& series,
                                     std::size_t window, double eta);

// Overload matching the metrics-driven call site; sizes must agree.
std::set<std::size_t> critical_trace(const std::vector<MetricsRow>& metrics,
                                     const std::vector<double>& grad_norms,
                                     std::size_t window, double eta = 0.5);

}  // namespace accordion
