#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "accordion/config.hpp"
#include "accordion/simulator.hpp"
#include "accordion/verify.hpp"

using json = nlohmann::json;
using namespace accordion;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssertFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

void apply_overrides(KvConfig& cfg, const std::vector<std::string>& sets,
                     long long seed) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed >= 0) cfg.set("train.seed", std::to_string(seed));
}

RunSpec load_spec(const std::string& config_path,
                  const std::vector<std::string>& sets, long long seed) {
  KvConfig cfg = config_path.empty()
                     ? spec_to_config(canonical_run_spec())
                     : KvConfig::parse_file(config_path);
  apply_overrides(cfg, sets, seed);
  return spec_from_config(cfg);
}

json summary_json(const RunSpec& spec, const RunResult& result) {
  json j;
  j["final_metric"] = result.metrics.back().eval_metric;
  j["final_loss"] = result.metrics.back().train_loss;
  j["total_floats"] = result.total_floats;
  j["seed"] = spec.train.seed;
  json trace = json::array();
  for (const auto& row : result.metrics) trace.push_back(row.level_summary);
  j["level_trace"] = trace;
  return j;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write output file: " + path);
  out << content;
}

std::string summary_path_for(const std::string& csv_path) {
  const auto dot = csv_path.rfind(".csv");
  if (dot != std::string::npos && dot == csv_path.size() - 4)
    return csv_path.substr(0, dot) + ".summary.json";
  return csv_path + ".summary.json";
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              long long seed, std::string out_path) {
  const RunSpec spec = load_spec(config_path, sets, seed);
  Model model = build_model(spec);
  Dataset data = build_dataset(spec);
  RunResult result = run(spec.train, std::move(model), data);

  if (out_path.empty()) out_path = "metrics.csv";
  write_file(out_path, metrics_to_csv(result.metrics));
  const json summary = summary_json(spec, result);
  write_file(summary_path_for(out_path), summary.dump(2) + "\n");

  if (spec.report_format == "json") {
    std::cout << summary.dump(2) << "\n";
  } else {
    std::cout << "run '" << spec.label << "': " << result.metrics.size()
              << " epochs, final metric " << result.metrics.back().eval_metric
              << ", total floats " << result.total_floats << "\n"
              << "metrics: " << out_path << "\n";
  }
  return kExitOk;
}

int cmd_compare(const std::vector<std::string>& config_paths,
                const std::vector<std::string>& sets, long long seed,
                const std::string& out_path) {
  if (config_paths.empty())
    throw ConfigError("compare needs at least one --config");
  std::vector<RunSpec> specs;
  for (const auto& p : config_paths) specs.push_back(load_spec(p, sets, seed));
  for (std::size_t i = 1; i < specs.size(); ++i)
    if (!comparable_specs(specs[0], specs[i]))
      throw ConfigError("specs '" + specs[0].label + "' and '" + specs[i].label +
                        "' use different datasets or seeds");

  struct Row {
    std::string label;
    double final_metric;
    std::uint64_t total_floats;
    double ratio;
  };
  std::vector<Row> rows;
  for (const auto& spec : specs) {
    Model model = build_model(spec);
    Dataset data = build_dataset(spec);
    RunResult result = run(spec.train, std::move(model), data);
    rows.push_back({spec.label, result.metrics.back().eval_metric,
                    result.total_floats, 1.0});
  }
  for (auto& r : rows)
    r.ratio = static_cast<double>(rows.front().total_floats) /
              static_cast<double>(r.total_floats);

  std::string csv = "label,final_metric,total_floats,floats_ratio_vs_first\n";
  std::printf("%-24s %14s %16s %10s\n", "label", "final_metric", "total_floats",
              "ratio");
  for (const auto& r : rows) {
    std::printf("%-24s %14.6g %16llu %9.3gx\n", r.label.c_str(), r.final_metric,
                static_cast<unsigned long long>(r.total_floats), r.ratio);
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.17g,%llu,%.17g", r.final_metric,
                  static_cast<unsigned long long>(r.total_floats), r.ratio);
    csv += r.label + "," + buf + "\n";
  }
  if (!out_path.empty()) write_file(out_path, csv);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify subcommands
// ---------------------------------------------------------------------------

struct Assertions {
  json items = json::array();
  bool all_pass = true;

  void add(const std::string& name, bool pass, json details = {}) {
    json j;
    j["name"] = name;
    j["pass"] = pass;
    if (!details.is_null()) j["details"] = std::move(details);
    items.push_back(std::move(j));
    all_pass = all_pass && pass;
  }
};

int emit_report(const std::string& which, Assertions& a,
                const std::string& out_path) {
  json report;
  report["verification"] = which;
  report["pass"] = a.all_pass;
  report["assertions"] = a.items;
  const std::string text = report.dump(2) + "\n";
  std::cout << text;
  if (!out_path.empty()) write_file(out_path, text);
  return a.all_pass ? kExitOk : kExitAssertFailed;
}

LemmaParams lemma_instance(std::size_t dim, std::size_t k1, std::size_t k2,
                           double lambda, double sigma, std::uint64_t seed) {
  LemmaParams p;
  p.mu = Tensor(dim, 1);
  p.w = Tensor(dim, 1);
  Rng rng(Rng::derive(seed, {0x13a0u}));
  // Random disjoint-ish supports with entries bounded away from zero.
  std::vector<std::size_t> idx(dim);
  std::iota(idx.begin(), idx.end(), 0u);
  for (std::size_t i = dim; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(idx[i - 1], idx[j]);
  }
  for (std::size_t i = 0; i < k1 && i < dim; ++i)
    p.mu[idx[i]] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.5 + rng.uniform());
  for (std::size_t i = 0; i < k2 && k1 + i < dim; ++i)
    p.w[idx[k1 + i]] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.5 + rng.uniform());
  p.lambda = lambda;
  p.sigma = sigma;
  p.seed = seed;
  return p;
}

int verify_lemma(KvConfig& cfg, const std::string& out_path) {
  const std::size_t dim = cfg.get_count("lemma.dim", 20);
  const std::size_t k1 = cfg.get_count("lemma.k1", 3);
  const std::size_t k2 = cfg.get_count("lemma.k2", 3);
  const double lambda = cfg.get_double("lemma.lambda", 0.1);
  const std::size_t n = cfg.get_count("lemma.n", 1000);
  const std::size_t trials = cfg.get_count("lemma.trials", 200);
  const std::size_t instances = cfg.get_count("lemma.instances", 100);
  const double sigma_small = cfg.get_double("lemma.sigma_small", 1e-3);
  const std::vector<double> sweep =
      cfg.get_double_list("lemma.sigma_sweep", {5e-4, 1e-3, 2e-3});
  const auto seed = static_cast<std::uint64_t>(cfg.get_count("lemma.seed", 7));

  Assertions a;

  // Sparsity of the expected gradient across random sparse instances.
  std::size_t worst_support = 0;
  bool support_ok = true;
  for (std::size_t i = 0; i < instances; ++i) {
    LemmaParams p = lemma_instance(dim, k1, k2, lambda, 0.1, seed + i);
    const Tensor g = expected_lasso_grad(p);
    std::size_t support = 0;
    for (double v : g.data())
      if (std::abs(v) > 1e-12) ++support;
    worst_support = std::max(worst_support, support);
    support_ok = support_ok && support <= k1 + k2;
  }
  a.add("support_size <= k1 + k2 on " + std::to_string(instances) + " instances",
        support_ok, {{"worst_support", worst_support}, {"k1_plus_k2", k1 + k2}});

  // Tail vs the Chebyshev-style bound over a sigma sweep where the bound is
  // informative.
  json sweep_rows = json::array();
  bool sweep_ok = true;
  for (double sigma : sweep) {
    LemmaParams p = lemma_instance(dim, k1, k2, lambda, sigma, seed);
    p.n = n;
    p.trials = trials;
    const LemmaReport rep = lemma_montecarlo(p);
    json row;
    row["sigma"] = sigma;
    row["empirical_tail"] = rep.empirical_tail;
    row["chebyshev_bound"] = rep.chebyshev_bound;
    row["per_coord_tail"] = rep.per_coord_tail;
    row["per_coord_bound"] = rep.per_coord_bound;
    if (rep.chebyshev_bound < 1.0) {
      sweep_ok = sweep_ok && rep.empirical_tail <= rep.chebyshev_bound;
      sweep_ok = sweep_ok && rep.per_coord_tail <= rep.per_coord_bound;
    }
    sweep_rows.push_back(row);
  }
  a.add("empirical tail within the bound where the bound is < 1", sweep_ok,
        sweep_rows);

  // Vanishing noise kills the tail.
  LemmaParams p0 = lemma_instance(dim, k1, k2, lambda, sigma_small, seed);
  p0.n = n;
  p0.trials = trials;
  const LemmaReport rep0 = lemma_montecarlo(p0);
  a.add("sigma -> 0 drives the tail below 1e-3", rep0.empirical_tail < 1e-3,
        {{"sigma", sigma_small}, {"empirical_tail", rep0.empirical_tail}});

  const auto leftovers = cfg.unconsumed();
  if (!leftovers.empty())
    throw ConfigError("unknown config key: " + leftovers.front());
  return emit_report("lemma", a, out_path);
}

int verify_overlap(KvConfig& cfg, const std::string& out_path) {
  const std::size_t dim = cfg.get_count("overlap.dim", 50);
  const std::size_t k1 = cfg.get_count("overlap.k1", 5);
  const std::size_t k2 = cfg.get_count("overlap.k2", 5);
  const double lambda = cfg.get_double("overlap.lambda", 0.1);
  const std::size_t count = cfg.get_count("overlap.count", 200);
  const double k_frac = cfg.get_double("overlap.k", 0.1);
  const double sigma_rel = cfg.get_double("overlap.sigma_rel", 0.05);
  const auto seed = static_cast<std::uint64_t>(cfg.get_count("overlap.seed", 7));

  Assertions a;

  // Identical gradients overlap fully.
  {
    Rng rng(Rng::derive(seed, {0xAAu}));
    Tensor g = random_normal(dim, 1, rng);
    const double ov = topk_overlap({g, g, g}, k_frac, seed);
    a.add("identical gradients overlap 1.0", ov == 1.0, {{"overlap", ov}});
  }

  // Stochastic gradients in the small-noise regime share their top support.
  LemmaParams p = lemma_instance(dim, k1, k2, lambda, 0.1, seed);
  p.sigma = sigma_rel * norm2(p.mu);
  std::vector<Tensor> grads;
  Rng rng(Rng::derive(seed, {0x90ADu}));
  for (std::size_t i = 0; i < count; ++i) grads.push_back(sample_lasso_grad(p, rng));
  const double mean_overlap = topk_overlap(grads, k_frac, seed);
  a.add("lemma-regime mean top-10% overlap >= 0.9", mean_overlap >= 0.9,
        {{"mean_overlap", mean_overlap},
         {"sigma", p.sigma},
         {"gradients", count}});

  const auto leftovers = cfg.unconsumed();
  if (!leftovers.empty())
    throw ConfigError("unknown config key: " + leftovers.front());
  return emit_report("overlap", a, out_path);
}

RunResult canonical_run_with_checkpoints(std::size_t checkpoint_every) {
  RunSpec spec = canonical_run_spec();
  spec.train.checkpoint_every = checkpoint_every;
  Model model = build_model(spec);
  Dataset data = build_dataset(spec);
  return run(spec.train, std::move(model), data);
}

bool windows_covered(const std::set<std::size_t>& flags,
                     const RunSpec& spec, std::size_t post_decay) {
  for (std::size_t e = 0; e <= spec.train.warmup_epochs; ++e)
    if (!flags.count(e)) return false;
  for (std::size_t d : spec.train.decay_epochs)
    for (std::size_t e = d; e <= d + post_decay && e < spec.train.epochs; ++e)
      if (!flags.count(e)) return false;
  return true;
}

json flag_list(const std::set<std::size_t>& flags) {
  json j = json::array();
  for (std::size_t e : flags) j.push_back(e);
  return j;
}

int verify_trace(KvConfig& cfg, const std::string& out_path) {
  const std::size_t window = cfg.get_count("trace.window", 3);
  const double eta = cfg.get_double("trace.eta", 0.5);

  Assertions a;
  a.add("constant norms flag nothing",
        critical_trace(std::vector<double>(12, 3.0), window, eta).empty());
  {
    std::vector<double> halving{64, 32, 16, 8, 4, 2, 1};
    const auto flags = critical_trace(halving, window, eta);
    a.add("halving norms flag every epoch", flags.size() == halving.size());
  }

  const RunSpec spec = canonical_run_spec();
  RunResult result = canonical_run_with_checkpoints(0);
  const auto flags = critical_trace(result.metrics, result.epoch_grad_norms,
                                    window, eta);
  a.add("gradient-norm flags cover warmup and post-decay windows",
        windows_covered(flags, spec, window),
        {{"flags", flag_list(flags)},
         {"warmup", spec.train.warmup_epochs},
         {"decays", spec.train.decay_epochs}});

  const auto leftovers = cfg.unconsumed();
  if (!leftovers.empty())
    throw ConfigError("unknown config key: " + leftovers.front());
  return emit_report("trace", a, out_path);
}

int verify_hessian(KvConfig& cfg, const std::string& out_path) {
  const std::size_t k = cfg.get_count("hessian.k", 3);
  const std::size_t window = cfg.get_count("hessian.window", 3);
  const double eta = cfg.get_double("hessian.eta", 0.5);

  Assertions a;

  // Quadratic fixture 1/2 w^T diag(3,1) w: eigenvalues 3 and 1.
  {
    Model quad = make_least_squares_model(2);
    Dataset data;
    data.features = Tensor(2, 2);
    data.features(0, 0) = std::sqrt(6.0);
    data.features(1, 1) = std::sqrt(2.0);
    data.labels = {0.0, 0.0};
    const auto eigs = hessian_top_eigs(quad, data, 2);
    const bool ok = std::abs(eigs[0].value - 3.0) < 1e-4 &&
                    std::abs(eigs[1].value - 1.0) < 1e-4;
    a.add("quadratic fixture eigenvalues [3, 1]", ok,
          {{"eig0", eigs[0].value}, {"eig1", eigs[1].value}});
  }

  const RunSpec spec = canonical_run_spec();
  RunResult result = canonical_run_with_checkpoints(1);
  Dataset data = build_dataset(spec);

  // HVP symmetry <H u, v> == <u, H v> at the final iterate.
  {
    Rng rng(17);
    const std::size_t dim = result.final_model.param_count();
    Tensor u = random_normal(dim, 1, rng);
    Tensor v = random_normal(dim, 1, rng);
    u *= 1.0 / norm2(u);
    v *= 1.0 / norm2(v);
    const double huv = dot(hessian_vector_product(result.final_model, data, u), v);
    const double uhv = dot(u, hessian_vector_product(result.final_model, data, v));
    const double err = std::abs(huv - uhv) / std::max(1.0, std::abs(huv));
    a.add("hvp symmetry error <= 1e-4", err <= 1e-4, {{"error", err}});
  }

  const auto trace = hessian_top_eigs(result.final_model, data, k,
                                      result.checkpoints);
  std::vector<double> top_eig;
  top_eig.reserve(trace.size());
  for (const auto& eigs : trace) top_eig.push_back(eigs.front().value);
  const auto flags = critical_trace(top_eig, window, eta);
  a.add("hessian-eigenvalue flags cover warmup and post-decay windows",
        windows_covered(flags, spec, window),
        {{"flags", flag_list(flags)}, {"top_eig", top_eig}});

  const auto leftovers = cfg.unconsumed();
  if (!leftovers.empty())
    throw ConfigError("unknown config key: " + leftovers.front());
  return emit_report("hessian", a, out_path);
}

int cmd_verify(const std::string& which, const std::vector<std::string>& sets,
               long long seed, const std::string& out_path) {
  KvConfig cfg;
  apply_overrides(cfg, sets, -1);
  if (seed >= 0) {
    cfg.set(which + ".seed", std::to_string(seed));
  }
  if (which == "lemma") return verify_lemma(cfg, out_path);
  if (which == "overlap") return verify_overlap(cfg, out_path);
  if (which == "hessian") return verify_hessian(cfg, out_path);
  if (which == "trace") return verify_trace(cfg, out_path);
  throw ConfigError("unknown verification '" + which +
                    "', expected overlap|lemma|hessian|trace");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive gradient-communication training simulator"};
  app.require_subcommand(1);

  std::string config_path, out_path, which;
  std::vector<std::string> config_paths, sets;
  long long seed = -1;

  auto* train = app.add_subcommand("train", "run one training spec");
  train->add_option("--config", config_path, "config file (default: canonical run)");
  train->add_option("--seed", seed, "override train.seed");
  train->add_option("--out", out_path, "metrics CSV path (default metrics.csv)");
  train->add_option("--set", sets, "override a config key, key=value")->take_all();

  auto* compare = app.add_subcommand("compare", "run several specs on shared data");
  compare->add_option("--config", config_paths, "config files")->take_all();
  compare->add_option("--seed", seed, "override train.seed for all specs");
  compare->add_option("--out", out_path, "write the comparison table as CSV");
  compare->add_option("--set", sets, "override a key in every spec")->take_all();

  auto* verify = app.add_subcommand("verify", "run one verification suite");
  verify->add_option("which", which, "overlap|lemma|hessian|trace")->required();
  verify->add_option("--seed", seed, "override the suite seed");
  verify->add_option("--out", out_path, "write the JSON report here too");
  verify->add_option("--set", sets, "override a suite parameter")->take_all();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, sets, seed, out_path);
    if (compare->parsed()) return cmd_compare(config_paths, sets, seed, out_path);
    if (verify->parsed()) return cmd_verify(which, sets, seed, out_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
