#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "accordion/rng.hpp"

namespace accordion {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of 64-bit reals. cols == 1 denotes a vector.
// Values are immutable once handed out of an operation; all mutation happens
// through the owning object.
class Tensor {
 public:
  Tensor() : rows_(0), cols_(0) {}
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str());
  }

  static Tensor column(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(n, 1, std::move(v));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool is_vector() const { return cols_ == 1; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  bool all_finite() const;

  Tensor& operator+=(const Tensor& o);
  Tensor& operator-=(const Tensor& o);
  Tensor& operator*=(double c);

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double c, Tensor a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Euclidean (Frobenius) norm over all entries.
double norm2(const Tensor& t);

// Inner product over flattened entries; shapes must match.
double dot(const Tensor& a, const Tensor& b);

Tensor random_normal(std::size_t rows, std::size_t cols, Rng& rng);

struct OrthonormalizeResult {
  Tensor q;
  // True when a column collapsed during Gram-Schmidt and was replaced by a
  // deterministic pseudo-random direction.
  bool replaced_degenerate = false;
};

// Two-pass modified Gram-Schmidt on the columns of m (rows >= cols).
// Columns that lose all mass under projection (norm < 1e-12) are replaced by
// deterministic pseudo-random unit vectors re-orthogonalized against the rest.
OrthonormalizeResult orthonormalize(const Tensor& m);

struct PowerIterationResult {
  double value = 0.0;
  Tensor vector;
  bool converged = false;
};

using MatVec = std::function<Tensor(const Tensor&)>;

// Dominant eigenpair of a symmetric operator given as a matvec oracle.
// Stops when the Rayleigh quotient moves less than tol between iterations.
// Deflation is the caller's job: wrap the oracle with v -> A v - lambda (q.v) q.
PowerIterationResult power_iteration_top_eig(const MatVec& matvec,
                                             std::size_t dim,
                                             std::size_t iters, double tol,
                                             std::uint64_t seed);

}  // namespace accordion
