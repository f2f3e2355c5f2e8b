#include "accordion/tensor.hpp"

#include <cmath>

namespace accordion {

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor& Tensor::operator+=(const Tensor& o) {
  if (!same_shape(o))
    throw ShapeError("add: shape mismatch " + shape_str() + " vs " + o.shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
  if (!same_shape(o))
    throw ShapeError("sub: shape mismatch " + shape_str() + " vs " + o.shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double c) {
  for (double& v : data_) v *= c;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(double c, Tensor a) { return a *= c; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree, " + a.shape_str() +
                     " x " + b.shape_str());
  Tensor out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

double norm2(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size())
    throw ShapeError("dot: size mismatch " + a.shape_str() + " vs " + b.shape_str());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Tensor random_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(rows, cols);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

namespace {

double column_dot(const Tensor& m, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, a) * m(r, b);
  return s;
}

// Subtracts from column j its projections onto columns [0, j).
void project_out(Tensor& q, std::size_t j) {
  for (std::size_t k = 0; k < j; ++k) {
    const double coef = column_dot(q, k, j);
    for (std::size_t r = 0; r < q.rows(); ++r) q(r, j) -= coef * q(r, k);
  }
}

}  // namespace

OrthonormalizeResult orthonormalize(const Tensor& m) {
  if (m.rows() < m.cols())
    throw ShapeError("orthonormalize: need rows >= cols, got " + m.shape_str());
  constexpr double kDegenerate = 1e-12;
  OrthonormalizeResult res;
  res.q = m;
  Tensor& q = res.q;
  for (std::size_t j = 0; j < q.cols(); ++j) {
    // Two MGS passes; the second pass restores orthogonality lost to rounding.
    project_out(q, j);
    project_out(q, j);
    double nrm = std::sqrt(column_dot(q, j, j));
    std::size_t attempt = 0;
    while (nrm < kDegenerate) {
      res.replaced_degenerate = true;
      Rng rng(Rng::derive(0xC01u, {q.rows(), q.cols(), j, attempt++}));
      for (std::size_t r = 0; r < q.rows(); ++r) q(r, j) = rng.normal();
      project_out(q, j);
      project_out(q, j);
      nrm = std::sqrt(column_dot(q, j, j));
    }
    for (std::size_t r = 0; r < q.rows(); ++r) q(r, j) /= nrm;
  }
  return res;
}

PowerIterationResult power_iteration_top_eig(const MatVec& matvec,
                                             std::size_t dim,
                                             std::size_t iters, double tol,
                                             std::uint64_t seed) {
  if (iters < 1) throw ShapeError("power_iteration: iters must be >= 1");
  Rng rng(seed);
  Tensor v = random_normal(dim, 1, rng);
  v *= 1.0 / norm2(v);

  PowerIterationResult res;
  res.vector = v;
  double prev = 0.0;
  bool have_prev = false;
  for (std::size_t it = 0; it < iters; ++it) {
    Tensor av = matvec(v);
    const double lambda = dot(v, av);
    const double av_norm = norm2(av);
    if (av_norm < 1e-300) {
      // Operator annihilates the iterate; eigenvalue 0 along v.
      res.value = 0.0;
      res.vector = v;
      res.converged = true;
      return res;
    }
    av *= 1.0 / av_norm;
    v = av;
    res.value = lambda;
    res.vector = v;
    if (have_prev && std::abs(lambda - prev) <= tol * std::max(1.0, std::abs(lambda))) {
      res.converged = true;
      // One more Rayleigh quotient against the final direction.
      res.value = dot(v, matvec(v));
      return res;
    }
    prev = lambda;
    have_prev = true;
  }
  res.value = dot(v, matvec(v));
  return res;
}

}  // namespace accordion
