#include "accordion/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace accordion {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double_key(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

KvConfig KvConfig::parse_string(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        " is not key=value: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + " has an empty key");
    cfg.values_[key] = value;
  }
  return cfg;
}

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

void KvConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

bool KvConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key " + key + " expects a number, got '" + it->second + "'");
  }
}

std::size_t KvConfig::get_count(const std::string& key, std::size_t fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(it->second, &pos);
    if (pos != it->second.size() || v < 0) throw std::invalid_argument("bad");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("key " + key + " expects a nonnegative integer, got '" +
                      it->second + "'");
  }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("key " + key + " expects true/false, got '" + it->second + "'");
}

std::vector<std::size_t> KvConfig::get_count_list(
    const std::string& key, const std::vector<std::size_t>& fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::size_t> out;
  if (trim(it->second).empty()) return out;
  std::istringstream in(it->second);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(part, &pos);
      if (pos != part.size() || v < 0) throw std::invalid_argument("bad");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("key " + key + " expects a comma list of integers, got '" +
                        it->second + "'");
    }
  }
  return out;
}

std::vector<double> KvConfig::get_double_list(const std::string& key,
                                              const std::vector<double>& fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  if (trim(it->second).empty()) return out;
  std::istringstream in(it->second);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    try {
      std::size_t pos = 0;
      const double v = std::stod(part, &pos);
      if (pos != part.size()) throw std::invalid_argument("bad");
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("key " + key + " expects a comma list of numbers, got '" +
                        it->second + "'");
    }
  }
  return out;
}

std::vector<std::string> KvConfig::unconsumed() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!consumed_.count(k)) out.push_back(k);
  return out;
}

std::string KvConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

RunSpec spec_from_config(KvConfig& config) {
  RunSpec spec;
  spec.label = config.get_string("label", spec.label);

  spec.model_kind = config.get_string("model.kind", spec.model_kind);
  spec.hidden = config.get_count("model.hidden", spec.hidden);
  spec.outputs = config.get_count("model.outputs", spec.outputs);
  spec.lambda = config.get_double("model.lambda", spec.lambda);

  spec.data_kind = config.get_string("data.kind", spec.data_kind);
  spec.dim = config.get_count("data.dim", spec.dim);
  spec.n = config.get_count("data.n", spec.n);
  spec.sigma = config.get_double("data.sigma", spec.sigma);
  spec.mu_nonzeros = config.get_count("data.mu_nonzeros", spec.mu_nonzeros);
  spec.mu_scale = config.get_double("data.mu_scale", spec.mu_scale);
  spec.noise = config.get_double("data.noise", spec.noise);

  TrainConfig& t = spec.train;
  t.workers = config.get_count("train.workers", t.workers);
  t.epochs = config.get_count("train.epochs", t.epochs);
  t.batch_per_worker = config.get_count("train.batch_per_worker", t.batch_per_worker);
  t.base_lr = config.get_double("train.base_lr", t.base_lr);
  t.reference_global_batch =
      config.get_count("train.reference_batch", t.reference_global_batch);
  t.warmup_epochs = config.get_count("train.warmup_epochs", t.warmup_epochs);
  t.decay_epochs = config.get_count_list("train.decay_epochs", t.decay_epochs);
  t.decay_factor = config.get_double("train.decay_factor", t.decay_factor);
  t.momentum = config.get_double("train.momentum", t.momentum);
  t.seed = config.get_count("train.seed", static_cast<std::size_t>(t.seed));
  t.checkpoint_every =
      config.get_count("train.checkpoint_every", t.checkpoint_every);

  const std::string mode = config.get_string("mode", "accordion");
  if (mode == "static") {
    t.static_level = level_from_string(config.get_string("static.level", "dense"));
    t.adaptive.reset();
  } else if (mode == "accordion") {
    SchedulerConfig s;
    s.eta = config.get_double("accordion.eta", 0.5);
    s.period_epochs = config.get_count("accordion.period_epochs", 3);
    const std::string smode = config.get_string("accordion.mode", "compression");
    if (smode == "compression") {
      s.mode = ScheduleMode::Compression;
    } else if (smode == "batchsize") {
      s.mode = ScheduleMode::BatchSize;
    } else {
      throw ConfigError("accordion.mode must be compression or batchsize, got '" +
                        smode + "'");
    }
    s.level_low = level_from_string(config.get_string("accordion.low", "powersgd:2"));
    s.level_high = level_from_string(config.get_string("accordion.high", "powersgd:1"));
    s.batch_monotone_increase = config.get_bool("accordion.batch_monotone", true);
    t.adaptive = s;
    t.static_level.reset();
  } else {
    throw ConfigError("mode must be accordion or static, got '" + mode + "'");
  }

  spec.report_format = config.get_string("report.format", spec.report_format);
  if (spec.report_format != "csv" && spec.report_format != "json")
    throw ConfigError("report.format must be csv or json");

  const auto leftovers = config.unconsumed();
  if (!leftovers.empty())
    throw ConfigError("unknown config key: " + leftovers.front());
  return spec;
}

KvConfig spec_to_config(const RunSpec& spec) {
  KvConfig cfg;
  cfg.set("label", spec.label);
  cfg.set("model.kind", spec.model_kind);
  cfg.set("model.hidden", std::to_string(spec.hidden));
  cfg.set("model.outputs", std::to_string(spec.outputs));
  cfg.set("model.lambda", format_double_key(spec.lambda));
  cfg.set("data.kind", spec.data_kind);
  cfg.set("data.dim", std::to_string(spec.dim));
  cfg.set("data.n", std::to_string(spec.n));
  cfg.set("data.sigma", format_double_key(spec.sigma));
  cfg.set("data.mu_nonzeros", std::to_string(spec.mu_nonzeros));
  cfg.set("data.mu_scale", format_double_key(spec.mu_scale));
  cfg.set("data.noise", format_double_key(spec.noise));
  const TrainConfig& t = spec.train;
  cfg.set("train.workers", std::to_string(t.workers));
  cfg.set("train.epochs", std::to_string(t.epochs));
  cfg.set("train.batch_per_worker", std::to_string(t.batch_per_worker));
  cfg.set("train.base_lr", format_double_key(t.base_lr));
  cfg.set("train.reference_batch", std::to_string(t.reference_global_batch));
  cfg.set("train.warmup_epochs", std::to_string(t.warmup_epochs));
  std::string decays;
  for (std::size_t i = 0; i < t.decay_epochs.size(); ++i) {
    if (i) decays += ",";
    decays += std::to_string(t.decay_epochs[i]);
  }
  cfg.set("train.decay_epochs", decays);
  cfg.set("train.decay_factor", format_double_key(t.decay_factor));
  cfg.set("train.momentum", format_double_key(t.momentum));
  cfg.set("train.seed", std::to_string(t.seed));
  cfg.set("train.checkpoint_every", std::to_string(t.checkpoint_every));
  if (t.static_level) {
    cfg.set("mode", "static");
    cfg.set("static.level", to_string(*t.static_level));
  } else if (t.adaptive) {
    cfg.set("mode", "accordion");
    cfg.set("accordion.eta", format_double_key(t.adaptive->eta));
    cfg.set("accordion.period_epochs", std::to_string(t.adaptive->period_epochs));
    cfg.set("accordion.mode", to_string(t.adaptive->mode));
    cfg.set("accordion.low", to_string(t.adaptive->level_low));
    cfg.set("accordion.high", to_string(t.adaptive->level_high));
    cfg.set("accordion.batch_monotone",
            t.adaptive->batch_monotone_increase ? "true" : "false");
  }
  cfg.set("report.format", spec.report_format);
  return cfg;
}

Model build_model(const RunSpec& spec) {
  const ModelKind kind = model_kind_from_string(spec.model_kind);
  switch (kind) {
    case ModelKind::LeastSquares:
      return make_least_squares_model(spec.dim);
    case ModelKind::Logistic:
      return make_logistic_model(spec.dim);
    case ModelKind::Lasso:
      return make_lasso_model(spec.dim, spec.lambda);
    case ModelKind::Mlp1Hidden:
      return make_mlp_model(spec.dim, spec.hidden, spec.outputs, spec.train.seed);
  }
  throw ConfigError("unreachable model kind");
}

Dataset build_dataset(const RunSpec& spec) {
  if (spec.data_kind == "two_gaussian") {
    if (spec.mu_nonzeros == 0 || spec.mu_nonzeros > spec.dim)
      throw ConfigError("data.mu_nonzeros must be in [1, data.dim]");
    Tensor mu(spec.dim, 1);
    for (std::size_t j = 0; j < spec.mu_nonzeros; ++j) mu[j] = spec.mu_scale;
    return gen_two_gaussian(mu, spec.sigma, spec.n, spec.train.seed);
  }
  if (spec.data_kind == "least_squares") {
    return gen_least_squares(spec.dim, spec.n, spec.noise, spec.train.seed).data;
  }
  throw ConfigError("unknown data.kind: " + spec.data_kind);
}

RunSpec canonical_run_spec() {
  RunSpec spec;
  spec.label = "canonical";
  spec.model_kind = "mlp";
  spec.hidden = 16;
  spec.outputs = 2;
  spec.data_kind = "two_gaussian";
  spec.dim = 20;
  spec.n = 512;
  spec.sigma = 1.2;
  spec.mu_nonzeros = 4;
  spec.mu_scale = 4.0;
  spec.train.workers = 4;
  spec.train.epochs = 30;
  spec.train.batch_per_worker = 8;
  spec.train.base_lr = 0.025;
  // Warmup ramps to base_lr * 32/8 = 0.1 over the first five epochs.
  spec.train.reference_global_batch = 8;
  spec.train.warmup_epochs = 5;
  spec.train.decay_epochs = {15, 25};
  spec.train.decay_factor = 10.0;
  spec.train.momentum = 0.9;
  spec.train.seed = 1;
  SchedulerConfig s;
  s.eta = 0.5;
  s.period_epochs = 3;
  s.mode = ScheduleMode::Compression;
  s.level_low = Level{Scheme::PowerSgd, 2.0};
  s.level_high = Level{Scheme::PowerSgd, 1.0};
  spec.train.adaptive = s;
  return spec;
}

bool comparable_specs(const RunSpec& a, const RunSpec& b) {
  return a.data_kind == b.data_kind && a.dim == b.dim && a.n == b.n &&
         a.sigma == b.sigma && a.mu_nonzeros == b.mu_nonzeros &&
         a.mu_scale == b.mu_scale && a.noise == b.noise &&
         a.train.seed == b.train.seed;
}

}  // namespace accordion
