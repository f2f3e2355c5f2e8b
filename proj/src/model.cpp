#include "accordion/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace accordion {

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::LeastSquares: return "least_squares";
    case ModelKind::Logistic: return "logistic";
    case ModelKind::Lasso: return "lasso";
    case ModelKind::Mlp1Hidden: return "mlp";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "least_squares") return ModelKind::LeastSquares;
  if (s == "logistic") return ModelKind::Logistic;
  if (s == "lasso") return ModelKind::Lasso;
  if (s == "mlp") return ModelKind::Mlp1Hidden;
  throw std::invalid_argument("unknown model kind: " + s);
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.value.size();
  return n;
}

Layer& Model::layer(const std::string& name) {
  for (auto& l : layers)
    if (l.name == name) return l;
  throw std::invalid_argument("no layer named " + name);
}

const Layer& Model::layer(const std::string& name) const {
  for (const auto& l : layers)
    if (l.name == name) return l;
  throw std::invalid_argument("no layer named " + name);
}

std::pair<std::size_t, std::size_t> near_square_shape(std::size_t d) {
  std::size_t best_rows = d, best_cols = 1;
  for (std::size_t c = 1; c * c <= d; ++c) {
    if (d % c == 0) {
      best_cols = c;
      best_rows = d / c;
    }
  }
  return {best_rows, best_cols};
}

Model make_least_squares_model(std::size_t d) {
  Model m;
  m.kind = ModelKind::LeastSquares;
  m.input_dim = d;
  auto [r, c] = near_square_shape(d);
  m.layers.push_back({"w", Tensor(r, c)});
  return m;
}

Model make_logistic_model(std::size_t d) {
  Model m;
  m.kind = ModelKind::Logistic;
  m.input_dim = d;
  m.layers.push_back({"w", Tensor(d, 1)});
  return m;
}

Model make_lasso_model(std::size_t d, double lambda) {
  Model m;
  m.kind = ModelKind::Lasso;
  m.input_dim = d;
  m.lambda = lambda;
  m.layers.push_back({"w", Tensor(d, 1)});
  return m;
}

Model make_mlp_model(std::size_t d, std::size_t hidden, std::size_t output_dim,
                     std::uint64_t seed) {
  if (hidden == 0 || output_dim == 0)
    throw std::invalid_argument("mlp needs hidden > 0 and output_dim > 0");
  Model m;
  m.kind = ModelKind::Mlp1Hidden;
  m.input_dim = d;
  m.hidden_width = hidden;
  m.output_dim = output_dim;
  Rng rng(Rng::derive(seed, {0x71c9u}));
  const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  Tensor w1 = random_normal(hidden, d, rng);
  w1 *= s1;
  Tensor w2 = random_normal(output_dim, hidden, rng);
  w2 *= s2;
  m.layers.push_back({"w1", std::move(w1)});
  m.layers.push_back({"b1", Tensor(hidden, 1)});
  m.layers.push_back({"w2", std::move(w2)});
  m.layers.push_back({"b2", Tensor(output_dim, 1)});
  return m;
}

Dataset gen_two_gaussian(const Tensor& mu, double sigma, std::size_t n,
                         std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("gen_two_gaussian: empty dataset");
  if (norm2(mu) <= 0.0)
    throw std::invalid_argument("gen_two_gaussian: mu must be nonzero");
  if (sigma <= 0.0)
    throw std::invalid_argument("gen_two_gaussian: sigma must be positive");
  const std::size_t d = mu.size();
  Dataset ds;
  ds.seed = seed;
  ds.features = Tensor(n, d);
  ds.labels.resize(n);
  Rng rng(Rng::derive(seed, {0x26a5u}));
  for (std::size_t i = 0; i < n; ++i) {
    const double label = (i % 2 == 1) ? 1.0 : -1.0;
    ds.labels[i] = label;
    for (std::size_t j = 0; j < d; ++j)
      ds.features(i, j) = label * mu[j] + sigma * rng.normal();
  }
  return ds;
}

LeastSquaresData gen_least_squares(std::size_t d, std::size_t n, double noise,
                                   std::uint64_t seed) {
  Rng rng(Rng::derive(seed, {0x15d7u}));
  LeastSquaresData out;
  out.data.seed = seed;
  out.data.features = random_normal(n, d, rng);
  out.true_w = random_normal(d, 1, rng);
  out.data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double pred = 0.0;
    for (std::size_t j = 0; j < d; ++j) pred += out.data.features(i, j) * out.true_w[j];
    out.data.labels[i] = pred + noise * rng.normal();
  }

  // Condition estimate of X^T X via two power iterations (largest eigenvalue,
  // then largest of lmax*I - A which yields the smallest).
  const Tensor& x = out.data.features;
  auto xtx = [&x](const Tensor& v) {
    Tensor xv = matmul(x, v);
    return matmul(transpose(x), xv);
  };
  auto top = power_iteration_top_eig(xtx, d, 300, 1e-10, seed ^ 0xabcd);
  const double lmax = top.value;
  auto shifted = [&, lmax](const Tensor& v) {
    Tensor av = xtx(v);
    Tensor sv = v;
    sv *= lmax;
    return sv - av;
  };
  auto bottom = power_iteration_top_eig(shifted, d, 300, 1e-10, seed ^ 0xdcba);
  const double lmin = lmax - bottom.value;
  out.cond_xtx = lmin > 0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  return out;
}

namespace {

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Prediction of a linear layer stored as a matrix, contracting its row-major
// flattening against the feature row.
double linear_pred(const Tensor& w, const Dataset& data, std::size_t i) {
  double p = 0.0;
  const std::size_t d = w.size();
  for (std::size_t j = 0; j < d; ++j) p += w[j] * data.features(i, j);
  return p;
}

void check_dims(const Model& model, const Dataset& data) {
  if (model.input_dim != data.dim())
    throw ShapeError("model expects input dim " + std::to_string(model.input_dim) +
                     ", dataset has " + std::to_string(data.dim()));
}

std::size_t class_index(double label, std::size_t output_dim) {
  if (output_dim == 1) return 0;
  return label > 0.0 ? 1 : 0;
}

}  // namespace

LossGrad loss_and_grad(const Model& model, const Dataset& data,
                       std::span<const std::size_t> batch) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  check_dims(model, data);

  LossGrad out;
  out.grads.batch_size = batch.size();
  for (const auto& l : model.layers) out.grads.grads.emplace_back(l.value.rows(), l.value.cols());
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  switch (model.kind) {
    case ModelKind::LeastSquares: {
      const Tensor& w = model.layers[0].value;
      Tensor& g = out.grads.grads[0];
      for (std::size_t i : batch) {
        const double r = linear_pred(w, data, i) - data.labels[i];
        out.loss += 0.5 * r * r;
        for (std::size_t j = 0; j < w.size(); ++j) g[j] += r * data.features(i, j);
      }
      break;
    }
    case ModelKind::Logistic: {
      const Tensor& w = model.layers[0].value;
      Tensor& g = out.grads.grads[0];
      for (std::size_t i : batch) {
        const double y = data.labels[i];
        const double m = y * linear_pred(w, data, i);
        // log(1 + exp(-m)) computed stably.
        out.loss += m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
        const double coef = -y / (1.0 + std::exp(m));
        for (std::size_t j = 0; j < w.size(); ++j) g[j] += coef * data.features(i, j);
      }
      break;
    }
    case ModelKind::Lasso: {
      const Tensor& w = model.layers[0].value;
      Tensor& g = out.grads.grads[0];
      double l1 = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) l1 += std::abs(w[j]);
      for (std::size_t i : batch) {
        const double r = linear_pred(w, data, i) - data.labels[i];
        out.loss += 0.5 * r * r + model.lambda * l1;
        for (std::size_t j = 0; j < w.size(); ++j)
          g[j] += r * data.features(i, j) + model.lambda * sign0(w[j]);
      }
      break;
    }
    case ModelKind::Mlp1Hidden: {
      const Tensor& w1 = model.layers[0].value;
      const Tensor& b1 = model.layers[1].value;
      const Tensor& w2 = model.layers[2].value;
      const Tensor& b2 = model.layers[3].value;
      Tensor& gw1 = out.grads.grads[0];
      Tensor& gb1 = out.grads.grads[1];
      Tensor& gw2 = out.grads.grads[2];
      Tensor& gb2 = out.grads.grads[3];
      const std::size_t h = model.hidden_width, c = model.output_dim, d = model.input_dim;
      std::vector<double> a1(h), dout(c), dz1(h);
      for (std::size_t i : batch) {
        for (std::size_t r = 0; r < h; ++r) {
          double z = b1[r];
          for (std::size_t j = 0; j < d; ++j) z += w1(r, j) * data.features(i, j);
          a1[r] = std::tanh(z);
        }
        const std::size_t cls = class_index(data.labels[i], c);
        for (std::size_t k = 0; k < c; ++k) {
          double o = b2[k];
          for (std::size_t r = 0; r < h; ++r) o += w2(k, r) * a1[r];
          const double target = (c == 1) ? data.labels[i] : (k == cls ? 1.0 : 0.0);
          dout[k] = o - target;
          out.loss += 0.5 * dout[k] * dout[k];
        }
        for (std::size_t r = 0; r < h; ++r) {
          double da = 0.0;
          for (std::size_t k = 0; k < c; ++k) da += w2(k, r) * dout[k];
          dz1[r] = da * (1.0 - a1[r] * a1[r]);
        }
        for (std::size_t k = 0; k < c; ++k) {
          gb2[k] += dout[k];
          for (std::size_t r = 0; r < h; ++r) gw2(k, r) += dout[k] * a1[r];
        }
        for (std::size_t r = 0; r < h; ++r) {
          gb1[r] += dz1[r];
          for (std::size_t j = 0; j < d; ++j) gw1(r, j) += dz1[r] * data.features(i, j);
        }
      }
      break;
    }
  }

  out.loss *= inv_b;
  for (std::size_t li = 0; li < out.grads.grads.size(); ++li) {
    Tensor& g = out.grads.grads[li];
    g *= inv_b;
    if (!g.all_finite())
      throw NumericError("non-finite gradient in layer " + model.layers[li].name);
  }
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");
  return out;
}

LossGrad loss_and_grad(const Model& model, const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return loss_and_grad(model, data, all);
}

GradientSet finite_diff_grad(const Model& model, const Dataset& data,
                             std::span<const std::size_t> batch, double eps) {
  if (eps < 1e-8 || eps > 1e-3)
    throw std::invalid_argument("finite_diff_grad: eps outside [1e-8, 1e-3]");
  Model probe = model;
  GradientSet out;
  out.batch_size = batch.size();
  for (auto& l : probe.layers) {
    Tensor g(l.value.rows(), l.value.cols());
    for (std::size_t i = 0; i < l.value.size(); ++i) {
      const double saved = l.value[i];
      l.value[i] = saved + eps;
      const double up = loss_and_grad(probe, data, batch).loss;
      l.value[i] = saved - eps;
      const double down = loss_and_grad(probe, data, batch).loss;
      l.value[i] = saved;
      g[i] = (up - down) / (2.0 * eps);
    }
    out.grads.push_back(std::move(g));
  }
  return out;
}

double evaluate(const Model& model, const Dataset& data) {
  check_dims(model, data);
  const std::size_t n = data.size();
  if (n == 0) throw std::invalid_argument("evaluate: empty dataset");

  if (model.kind == ModelKind::LeastSquares) {
    const Tensor& w = model.layers[0].value;
    double mse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = linear_pred(w, data, i) - data.labels[i];
      mse += r * r;
    }
    return mse / static_cast<double>(n);
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double score;
    if (model.kind == ModelKind::Mlp1Hidden) {
      const Tensor& w1 = model.layers[0].value;
      const Tensor& b1 = model.layers[1].value;
      const Tensor& w2 = model.layers[2].value;
      const Tensor& b2 = model.layers[3].value;
      const std::size_t h = model.hidden_width, c = model.output_dim;
      std::vector<double> a1(h);
      for (std::size_t r = 0; r < h; ++r) {
        double z = b1[r];
        for (std::size_t j = 0; j < model.input_dim; ++j)
          z += w1(r, j) * data.features(i, j);
        a1[r] = std::tanh(z);
      }
      if (c == 1) {
        score = b2[0];
        for (std::size_t r = 0; r < h; ++r) score += w2(0, r) * a1[r];
      } else {
        std::size_t best = 0;
        double best_o = -1e300;
        for (std::size_t k = 0; k < c; ++k) {
          double o = b2[k];
          for (std::size_t r = 0; r < h; ++r) o += w2(k, r) * a1[r];
          if (o > best_o) {
            best_o = o;
            best = k;
          }
        }
        if (best == class_index(data.labels[i], c)) ++correct;
        continue;
      }
    } else {
      score = linear_pred(model.layers[0].value, data, i);
    }
    const double pred = score >= 0.0 ? 1.0 : -1.0;
    if (pred == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace accordion
