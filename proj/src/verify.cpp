#include "accordion/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace accordion {

namespace {

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::size_t nnz(const Tensor& t, double tol = 1e-12) {
  std::size_t c = 0;
  for (double v : t.data())
    if (std::abs(v) > tol) ++c;
  return c;
}

void check_params(const LemmaParams& p) {
  if (p.mu.size() != p.w.size())
    throw ShapeError("lemma: mu and w must share a dimension");
  if (p.sigma <= 0.0) throw std::invalid_argument("lemma: sigma must be positive");
}

}  // namespace

Tensor expected_lasso_grad(const LemmaParams& p) {
  check_params(p);
  const std::size_t d = p.w.size();
  const double mu_dot_w = dot(p.mu, p.w);
  Tensor g(d, 1);
  for (std::size_t j = 0; j < d; ++j)
    g[j] = p.w[j] + p.lambda * sign0(p.w[j]) + p.mu[j] * mu_dot_w;
  const std::size_t k1 = nnz(p.mu), k2 = nnz(p.w);
  if (nnz(g) > k1 + k2)
    throw NumericError("expected gradient support exceeds k1 + k2");
  return g;
}

Tensor lasso_grad_exact_mean(const LemmaParams& p) {
  check_params(p);
  const std::size_t d = p.w.size();
  const double mu_dot_w = dot(p.mu, p.w);
  const double s2 = p.sigma * p.sigma;
  Tensor g(d, 1);
  for (std::size_t j = 0; j < d; ++j)
    g[j] = s2 * p.w[j] + p.mu[j] * mu_dot_w - p.mu[j] + p.lambda * sign0(p.w[j]);
  return g;
}

Tensor sample_lasso_grad(const LemmaParams& p, Rng& rng) {
  const std::size_t d = p.w.size();
  const double label = rng.uniform() < 0.5 ? -1.0 : 1.0;
  Tensor x(d, 1);
  for (std::size_t j = 0; j < d; ++j)
    x[j] = label * p.mu[j] + p.sigma * rng.normal();
  const double pred = dot(x, p.w);
  Tensor g(d, 1);
  for (std::size_t j = 0; j < d; ++j)
    g[j] = x[j] * pred - x[j] * label + p.lambda * sign0(p.w[j]);
  return g;
}

LemmaReport lemma_montecarlo(const LemmaParams& p) {
  check_params(p);
  if (p.n < 1000) throw std::invalid_argument("lemma: need n >= 1000 samples");
  const std::size_t d = p.w.size();

  LemmaReport rep;
  rep.k1 = nnz(p.mu);
  rep.k2 = nnz(p.w);
  rep.support_size = nnz(expected_lasso_grad(p));

  const Tensor mean = lasso_grad_exact_mean(p);
  double gamma = p.gamma_min;
  if (gamma <= 0.0) {
    gamma = std::numeric_limits<double>::infinity();
    for (double v : mean.data())
      if (std::abs(v) > 1e-12) gamma = std::min(gamma, std::abs(v));
    if (!std::isfinite(gamma)) gamma = 1.0;  // mean identically zero
  }
  rep.gamma = gamma;

  double mu_max = 0.0;
  for (double v : p.mu.data()) mu_max = std::max(mu_max, std::abs(v));
  const double w_sq = dot(p.w, p.w);
  const double s2 = p.sigma * p.sigma;
  const double var_bound = (s2 * s2 + 2.0 * mu_max * mu_max * s2) * w_sq + s2;
  rep.per_coord_bound = var_bound / (gamma * gamma);
  rep.chebyshev_bound = static_cast<double>(p.n) * static_cast<double>(d) *
                        rep.per_coord_bound;

  std::size_t bad_batches = 0;
  std::vector<std::size_t> coord_hits(d, 0);
  std::uint64_t total_samples = 0;
  for (std::size_t t = 0; t < p.trials; ++t) {
    Rng rng(Rng::derive(p.seed, {0x1e44au, t}));
    bool batch_bad = false;
    for (std::size_t i = 0; i < p.n; ++i) {
      const Tensor g = sample_lasso_grad(p, rng);
      ++total_samples;
      for (std::size_t j = 0; j < d; ++j) {
        if (std::abs(g[j] - mean[j]) >= gamma) {
          batch_bad = true;
          ++coord_hits[j];
        }
      }
    }
    if (batch_bad) ++bad_batches;
  }
  rep.empirical_tail =
      static_cast<double>(bad_batches) / static_cast<double>(p.trials);
  std::size_t worst = 0;
  for (std::size_t j = 0; j < d; ++j) worst = std::max(worst, coord_hits[j]);
  rep.per_coord_tail =
      static_cast<double>(worst) / static_cast<double>(total_samples);
  return rep;
}

namespace {

std::vector<std::uint32_t> top_support(const Tensor& g, std::size_t k) {
  std::vector<std::uint32_t> order(g.size());
  std::iota(order.begin(), order.end(), 0u);
  std::nth_element(order.begin(), order.begin() + (k - 1), order.end(),
                   [&g](std::uint32_t a, std::uint32_t b) {
                     const double ga = std::abs(g[a]), gb = std::abs(g[b]);
                     if (ga != gb) return ga > gb;
                     return a < b;
                   });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

double support_overlap(const std::vector<std::uint32_t>& a,
                       const std::vector<std::uint32_t>& b) {
  std::size_t inter = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) { ++inter; ++i; ++j; }
    else if (a[i] < b[j]) ++i;
    else ++j;
  }
  return static_cast<double>(inter) / static_cast<double>(a.size());
}

}  // namespace

double topk_overlap(const std::vector<Tensor>& grads, double k_fraction,
                    std::uint64_t seed) {
  if (grads.size() < 2)
    throw std::invalid_argument("topk_overlap: need at least two gradients");
  const std::size_t d = grads.front().size();
  for (const auto& g : grads)
    if (g.size() != d)
      throw ShapeError("topk_overlap: gradients must share a dimension");
  if (k_fraction <= 0.0 || k_fraction > 1.0)
    throw std::invalid_argument("topk_overlap: fraction must be in (0, 1]");
  const std::size_t k = std::min<std::size_t>(
      std::max<std::size_t>(
          1, static_cast<std::size_t>(std::ceil(k_fraction * static_cast<double>(d)))),
      d);

  std::vector<std::vector<std::uint32_t>> supports;
  supports.reserve(grads.size());
  for (const auto& g : grads) supports.push_back(top_support(g, k));

  const std::size_t m = grads.size();
  const std::size_t all_pairs = m * (m - 1) / 2;
  constexpr std::size_t kMaxPairs = 10000;
  double sum = 0.0;
  std::size_t used = 0;
  if (all_pairs <= kMaxPairs) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) {
        sum += support_overlap(supports[i], supports[j]);
        ++used;
      }
  } else {
    Rng rng(Rng::derive(seed, {0x0f7a11u}));
    while (used < kMaxPairs) {
      const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(m) - 1));
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(m) - 1));
      if (i == j) continue;
      sum += support_overlap(supports[i], supports[j]);
      ++used;
    }
  }
  return sum / static_cast<double>(used);
}

namespace {

Tensor flatten_params(const Model& model) {
  Tensor flat(model.param_count(), 1);
  std::size_t off = 0;
  for (const auto& l : model.layers)
    for (double v : l.value.data()) flat[off++] = v;
  return flat;
}

void load_params(Model& model, const Tensor& flat) {
  std::size_t off = 0;
  for (auto& l : model.layers)
    for (double& v : l.value.data()) v = flat[off++];
}

Tensor flatten_grads(const GradientSet& gs) {
  std::size_t total = 0;
  for (const auto& g : gs.grads) total += g.size();
  Tensor flat(total, 1);
  std::size_t off = 0;
  for (const auto& g : gs.grads)
    for (double v : g.data()) flat[off++] = v;
  return flat;
}

}  // namespace

Tensor hessian_vector_product(const Model& model, const Dataset& data,
                              const Tensor& v_flat) {
  const std::size_t dim = model.param_count();
  if (v_flat.size() != dim)
    throw ShapeError("hvp: direction has wrong dimension");
  const double vn = norm2(v_flat);
  if (vn == 0.0) return Tensor(dim, 1);
  const Tensor w0 = flatten_params(model);
  const double wn = norm2(w0);
  const double h = (wn > 1e-12 ? 1e-4 * wn : 1e-4) / vn;

  Model probe = model;
  Tensor shifted = w0;
  for (std::size_t i = 0; i < dim; ++i) shifted[i] = w0[i] + h * v_flat[i];
  load_params(probe, shifted);
  Tensor g_plus = flatten_grads(loss_and_grad(probe, data).grads);
  for (std::size_t i = 0; i < dim; ++i) shifted[i] = w0[i] - h * v_flat[i];
  load_params(probe, shifted);
  Tensor g_minus = flatten_grads(loss_and_grad(probe, data).grads);

  Tensor out(dim, 1);
  for (std::size_t i = 0; i < dim; ++i) out[i] = (g_plus[i] - g_minus[i]) / (2.0 * h);
  return out;
}

std::vector<EigEstimate> hessian_top_eigs(const Model& model,
                                          const Dataset& data, std::size_t k,
                                          std::uint64_t seed) {
  const std::size_t dim = model.param_count();
  if (dim > 1000)
    throw std::invalid_argument("hessian_top_eigs: model too large (" +
                                std::to_string(dim) + " parameters)");
  if (k > 10 || k == 0)
    throw std::invalid_argument("hessian_top_eigs: k must be in [1, 10]");

  std::vector<EigEstimate> out;
  std::vector<std::pair<double, Tensor>> found;  // (value, unit vector)
  for (std::size_t i = 0; i < k; ++i) {
    auto matvec = [&](const Tensor& v) {
      Tensor av = hessian_vector_product(model, data, v);
      for (const auto& [lambda, q] : found) {
        const double c = lambda * dot(q, v);
        for (std::size_t j = 0; j < av.size(); ++j) av[j] -= c * q[j];
      }
      return av;
    };
    auto res = power_iteration_top_eig(matvec, dim, 300, 1e-9,
                                       Rng::derive(seed, {0x8e16u, i}));
    out.push_back({res.value, res.converged});
    found.emplace_back(res.value, res.vector);
  }
  return out;
}

std::vector<std::vector<EigEstimate>> hessian_top_eigs(
    const Model& model_shape, const Dataset& data, std::size_t k,
    const std::vector<Model>& checkpoints, std::uint64_t seed) {
  std::vector<std::vector<EigEstimate>> out;
  out.reserve(checkpoints.size());
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    Model probe = model_shape;
    load_params(probe, flatten_params(checkpoints[c]));
    out.push_back(hessian_top_eigs(probe, data, k, Rng::derive(seed, {c})));
  }
  return out;
}

std::set<std::size_t> critical_trace(const std::vector<double>& series,
                                     std::size_t window, double eta) {
  if (window == 0) throw std::invalid_argument("critical_trace: window must be >= 1");
  std::set<std::size_t> flagged;
  if (series.size() < 2) return flagged;
  for (std::size_t e = 0; e + window < series.size(); ++e) {
    const double base = series[e];
    const double next = series[e + window];
    bool fire;
    if (base == 0.0) {
      fire = next > 0.0;
    } else {
      fire = std::abs(base - next) / std::abs(base) >= eta;
    }
    if (fire)
      for (std::size_t i = e; i <= e + window; ++i) flagged.insert(i);
  }
  return flagged;
}

std::set<std::size_t> critical_trace(const std::vector<MetricsRow>& metrics,
                                     const std::vector<double>& grad_norms,
                                     std::size_t window, double eta) {
  if (metrics.size() != grad_norms.size())
    throw std::invalid_argument("critical_trace: metrics and norms disagree in length");
  return critical_trace(grad_norms, window, eta);
}

}  // namespace accordion
