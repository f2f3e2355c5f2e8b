#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "accordion/tensor.hpp"

namespace accordion {

// Synthetic labeled data. Labels are +-1 for classification kinds and real
// for regression.
struct Dataset {
  Tensor features;             // n x d
  std::vector<double> labels;  // length n
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
};

enum class ModelKind { LeastSquares, Logistic, Lasso, Mlp1Hidden };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct Layer {
  std::string name;
  Tensor value;
};

struct Model {
  ModelKind kind = ModelKind::LeastSquares;
  std::vector<Layer> layers;
  double lambda = 0.0;             // lasso penalty
  std::size_t hidden_width = 0;    // mlp
  std::size_t input_dim = 0;
  std::size_t output_dim = 1;      // mlp head width

  std::size_t param_count() const;
  Layer& layer(const std::string& name);
  const Layer& layer(const std::string& name) const;
};

// Per-layer gradients, shapes matching the model exactly.
struct GradientSet {
  std::vector<Tensor> grads;
  std::size_t batch_size = 0;
};

struct LossGrad {
  double loss = 0.0;
  GradientSet grads;
};

// Linear predictors store their weight as a near-square matrix so low-rank
// compression has something to bite on; prediction contracts against the
// row-major flattening of the weight.
std::pair<std::size_t, std::size_t> near_square_shape(std::size_t d);

Model make_least_squares_model(std::size_t d);
Model make_logistic_model(std::size_t d);
Model make_lasso_model(std::size_t d, double lambda);
// Layers: w1 (h x d), b1 (h x 1), w2 (c x h), b2 (c x 1); tanh activation.
Model make_mlp_model(std::size_t d, std::size_t hidden, std::size_t output_dim,
                     std::uint64_t seed);

// Balanced two-Gaussian classes: x ~ N(label * mu, sigma^2 I), labels
// alternate -1, +1, ... so exactly floor(n/2) are positive.
Dataset gen_two_gaussian(const Tensor& mu, double sigma, std::size_t n,
                         std::uint64_t seed);

struct LeastSquaresData {
  Dataset data;
  Tensor true_w;     // d x 1
  double cond_xtx;   // condition number estimate of X^T X
};

// y = X w* + noise * eps with gaussian X, w*, eps.
LeastSquaresData gen_least_squares(std::size_t d, std::size_t n, double noise,
                                   std::uint64_t seed);

// Mean loss and mean per-example gradient over the batch.
LossGrad loss_and_grad(const Model& model, const Dataset& data,
                       std::span<const std::size_t> batch);
LossGrad loss_and_grad(const Model& model, const Dataset& data);

// Central-difference gradient of the same batch loss; the oracle the analytic
// gradients are validated against.
GradientSet finite_diff_grad(const Model& model, const Dataset& data,
                             std::span<const std::size_t> batch, double eps);

// Classification kinds report 0/1 accuracy, regression kinds mean squared
// error.
double evaluate(const Model& model, const Dataset& data);

}  // namespace accordion
