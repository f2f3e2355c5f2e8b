#pragma once

// Test-only reference implementations, kept independent of the library code
// they are used to check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "accordion/tensor.hpp"

namespace oracles {

// Cyclic Jacobi eigensolver for a symmetric matrix; eigenvalues sorted
// descending.
inline std::vector<double> jacobi_eigenvalues(accordion::Tensor a,
                                              int sweeps = 100,
                                              double tol = 1e-13) {
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) < tol) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eigs(n);
  for (std::size_t i = 0; i < n; ++i) eigs[i] = a(i, i);
  std::sort(eigs.begin(), eigs.end(), std::greater<double>());
  return eigs;
}

// Exhaustive best k-sparse l2 approximation error for small d.
inline double best_k_sparse_error(const std::vector<double>& a, std::size_t k) {
  const std::size_t d = a.size();
  double best = std::numeric_limits<double>::infinity();
  // Enumerate all supports of size k; keeping a coordinate exactly zeroes its
  // contribution to the error.
  std::vector<std::size_t> comb(k);
  std::iota(comb.begin(), comb.end(), std::size_t{0});
  auto advance = [&]() {
    for (std::size_t i = k; i-- > 0;) {
      if (comb[i] < d - k + i) {
        ++comb[i];
        for (std::size_t j = i + 1; j < k; ++j) comb[j] = comb[j - 1] + 1;
        return true;
      }
    }
    return false;
  };
  while (true) {
    double err = 0.0;
    std::size_t ci = 0;
    for (std::size_t i = 0; i < d; ++i) {
      if (ci < k && comb[ci] == i) {
        ++ci;
        continue;
      }
      err += a[i] * a[i];
    }
    best = std::min(best, err);
    if (!advance()) break;
  }
  return std::sqrt(best);
}

// Full-sort reference for top-k selection: magnitudes descending, ties to the
// lower index; returned indices are sorted ascending.
inline std::vector<std::uint32_t> full_sort_topk(const std::vector<double>& a,
                                                 std::size_t k) {
  std::vector<std::uint32_t> order(a.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&a](std::uint32_t x, std::uint32_t y) {
    const double ax = std::abs(a[x]), ay = std::abs(a[y]);
    if (ax != ay) return ax > ay;
    return x < y;
  });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

// Solve A x = b for symmetric positive definite A by Gaussian elimination
// with partial pivoting.
inline accordion::Tensor solve_linear(accordion::Tensor a, accordion::Tensor b) {
  const std::size_t n = a.rows();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(col, c), a(piv, c));
      std::swap(b[col], b[piv]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
      b[r] -= f * b[col];
    }
  }
  accordion::Tensor x(n, 1);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  return x;
}

// Normal-equations least-squares fit: (X^T X) w = X^T y.
inline accordion::Tensor normal_equations_fit(const accordion::Tensor& x,
                                              const std::vector<double>& y) {
  using accordion::Tensor;
  Tensor xt = accordion::transpose(x);
  Tensor xtx = accordion::matmul(xt, x);
  Tensor xty(x.cols(), 1);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) s += x(i, j) * y[i];
    xty[j] = s;
  }
  return solve_linear(xtx, xty);
}

// Proximal gradient (ISTA) reference for the L1-penalized least-squares
// objective (1/n) sum 1/2 (x_i^T w - y_i)^2 + lambda ||w||_1.
inline accordion::Tensor ista_lasso(const accordion::Tensor& x,
                                    const std::vector<double>& y, double lambda,
                                    std::size_t iters = 5000,
                                    double step = 0.05) {
  const std::size_t n = x.rows(), d = x.cols();
  accordion::Tensor w(d, 1);
  for (std::size_t it = 0; it < iters; ++it) {
    accordion::Tensor g(d, 1);
    for (std::size_t i = 0; i < n; ++i) {
      double pred = 0.0;
      for (std::size_t j = 0; j < d; ++j) pred += x(i, j) * w[j];
      const double r = (pred - y[i]) / static_cast<double>(n);
      for (std::size_t j = 0; j < d; ++j) g[j] += r * x(i, j);
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double z = w[j] - step * g[j];
      const double thr = step * lambda;
      w[j] = z > thr ? z - thr : (z < -thr ? z + thr : 0.0);
    }
  }
  return w;
}

}  // namespace oracles
