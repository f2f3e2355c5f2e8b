#include "accordion/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <thread>

namespace accordion {

double lr_schedule(std::size_t epoch, const TrainConfig& config,
                   std::size_t current_batch_per_worker) {
  const std::size_t initial_global = config.batch_per_worker * config.workers;
  const std::size_t ref = config.reference_global_batch > 0
                              ? config.reference_global_batch
                              : initial_global;
  const double global_batch =
      static_cast<double>(current_batch_per_worker * config.workers);
  const double target =
      config.base_lr * global_batch / static_cast<double>(ref);

  double lr;
  if (config.warmup_epochs > 0 && epoch < config.warmup_epochs) {
    const double t = static_cast<double>(epoch) /
                     static_cast<double>(config.warmup_epochs);
    lr = config.base_lr + (target - config.base_lr) * t;
  } else {
    lr = target;
  }
  for (std::size_t d : config.decay_epochs)
    if (epoch >= d) lr /= config.decay_factor;
  return lr;
}

namespace {

Tensor tree_sum(const std::vector<Tensor>& parts, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return parts[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  return tree_sum(parts, lo, mid) + tree_sum(parts, mid, hi);
}

double tree_sum(const std::vector<double>& parts, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return parts[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  return tree_sum(parts, lo, mid) + tree_sum(parts, mid, hi);
}

}  // namespace

Tensor aggregate_layer(const std::vector<CompressedMessage>& worker_msgs,
                       std::size_t rows, std::size_t cols) {
  if (worker_msgs.empty()) throw ProtocolError("aggregate: no worker messages");
  std::vector<Tensor> parts;
  parts.reserve(worker_msgs.size());
  const Scheme scheme = worker_msgs.front().scheme;
  for (const auto& msg : worker_msgs) {
    if (msg.scheme != scheme)
      throw ProtocolError("aggregate: mixed schemes on layer " + msg.layer_id);
    parts.push_back(decompress(msg, rows, cols));
  }
  Tensor sum = tree_sum(parts, 0, parts.size());
  sum *= 1.0 / static_cast<double>(parts.size());
  return sum;
}

std::vector<std::vector<std::size_t>> make_shards(std::size_t n,
                                                  std::size_t workers) {
  std::vector<std::vector<std::size_t>> shards(workers);
  const std::size_t base = n / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * base;
    const std::size_t hi = (w + 1 == workers) ? n : lo + base;
    shards[w].resize(hi - lo);
    std::iota(shards[w].begin(), shards[w].end(), lo);
  }
  return shards;
}

namespace {

std::size_t thread_count_from_env(std::size_t workers) {
  const char* env = std::getenv(kThreadsEnvVar);
  if (!env) return 1;
  const long v = std::strtol(env, nullptr, 10);
  if (v <= 1) return 1;
  return std::min<std::size_t>(static_cast<std::size_t>(v), workers);
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(idx[i - 1], idx[j]);
  }
}

bool layer_compressible(const Tensor& t) {
  return t.rows() > 1 && t.cols() > 1;
}

void validate_level(const Level& level, const Model& model) {
  if (level.scheme == Scheme::PowerSgd) {
    const auto rank = static_cast<std::size_t>(level.value);
    if (rank < 1) throw ConfigError("powersgd rank must be >= 1");
    for (const auto& l : model.layers) {
      if (!layer_compressible(l.value)) continue;
      if (rank > std::min(l.value.rows(), l.value.cols()))
        throw ConfigError("powersgd rank " + std::to_string(rank) +
                          " exceeds min dimension of layer " + l.name + " (" +
                          l.value.shape_str() + ")");
    }
  }
  if (level.scheme == Scheme::TopK &&
      (level.value <= 0.0 || level.value > 1.0))
    throw ConfigError("topk fraction must be in (0, 1]");
  if (level.scheme == Scheme::BatchSize && level.value < 1.0)
    throw ConfigError("batch size level must be >= 1");
}

std::uint64_t model_floats(const Model& model, const Level& level) {
  std::uint64_t total = 0;
  for (const auto& l : model.layers)
    total += float_count(level, l.value.rows(), l.value.cols());
  return total;
}

void validate_config(const TrainConfig& config, const Model& model,
                     const Dataset& data) {
  if (config.adaptive.has_value() == config.static_level.has_value())
    throw ConfigError("exactly one of adaptive and static_level must be set");
  if (config.workers == 0) throw ConfigError("need at least one worker");
  if (config.batch_per_worker == 0) throw ConfigError("batch size must be >= 1");
  if (data.size() < config.workers * config.batch_per_worker)
    throw ConfigError("dataset smaller than one global batch");
  for (std::size_t i = 0; i < config.decay_epochs.size(); ++i) {
    if (config.decay_epochs[i] >= config.epochs)
      throw ConfigError("decay epoch beyond run length");
    if (i > 0 && config.decay_epochs[i] <= config.decay_epochs[i - 1])
      throw ConfigError("decay epochs must be strictly increasing");
  }
  if (config.static_level) {
    if (config.static_level->scheme == Scheme::BatchSize)
      throw ConfigError("static batch size is just batch_per_worker; use a dense level");
    validate_level(*config.static_level, model);
  }
  if (config.adaptive) {
    const auto& a = *config.adaptive;
    if (a.eta <= 0.0) throw ConfigError("eta must be positive");
    if (a.period_epochs < 1) throw ConfigError("period must be >= 1");
    validate_level(a.level_low, model);
    validate_level(a.level_high, model);
    if (a.mode == ScheduleMode::BatchSize) {
      if (a.level_low.scheme != Scheme::BatchSize ||
          a.level_high.scheme != Scheme::BatchSize)
        throw ConfigError("batchsize mode needs batch levels on both rungs");
      if (!(a.level_low.value < a.level_high.value))
        throw ConfigError("batchsize mode needs B_low < B_high");
      if (static_cast<std::size_t>(a.level_low.value) != config.batch_per_worker)
        throw ConfigError("batch_per_worker must equal the B_low level");
      if (data.size() < config.workers * static_cast<std::size_t>(a.level_high.value))
        throw ConfigError("dataset smaller than one global batch at B_high");
    } else {
      if (a.level_low.scheme == Scheme::BatchSize ||
          a.level_high.scheme == Scheme::BatchSize)
        throw ConfigError("compression mode cannot take batch levels");
      if (model_floats(model, a.level_low) <= model_floats(model, a.level_high))
        throw ConfigError("level_low must communicate strictly more than level_high");
    }
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string rle_levels(const std::vector<Level>& levels) {
  std::string out;
  std::size_t i = 0;
  while (i < levels.size()) {
    std::size_t j = i;
    while (j < levels.size() && levels[j] == levels[i]) ++j;
    if (!out.empty()) out += ';';
    out += to_string(levels[i]) + "*" + std::to_string(j - i);
    i = j;
  }
  return out;
}

}  // namespace

RunResult run(const TrainConfig& config, Model model, const Dataset& data,
              const RunHooks& hooks) {
  validate_config(config, model, data);
  const std::size_t workers = config.workers;
  const std::size_t layer_count = model.layers.size();
  const bool batch_mode =
      config.adaptive && config.adaptive->mode == ScheduleMode::BatchSize;

  // Units: one per layer in compression mode, the flattened model otherwise.
  std::optional<SchedulerState> sched;
  if (config.adaptive) {
    sched.emplace(*config.adaptive);
    if (batch_mode) {
      sched->register_unit("model", model.param_count(), 1);
    } else {
      for (const auto& l : model.layers)
        sched->register_unit(l.name, l.value.rows(), l.value.cols());
    }
  }

  auto levels_for_epoch = [&]() -> std::vector<Level> {
    std::vector<Level> ls(layer_count);
    if (config.static_level) {
      for (auto& l : ls) l = *config.static_level;
    } else if (batch_mode) {
      for (auto& l : ls) l = Level{Scheme::Dense, 0.0};
    } else {
      for (std::size_t i = 0; i < layer_count; ++i)
        ls[i] = sched->level_of(model.layers[i].name);
    }
    return ls;
  };

  const auto shards = make_shards(data.size(), workers);
  std::vector<CompressorState> states;
  states.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    states.emplace_back(Rng::derive(config.seed, {0xC0313u, w}));

  std::vector<Tensor> momentum_buf;
  for (const auto& l : model.layers)
    momentum_buf.emplace_back(l.value.rows(), l.value.cols());

  RunResult result;
  if (config.adaptive) {
    result.unit_names = sched->unit_order();
  } else {
    result.unit_names.reserve(layer_count);
    for (const auto& l : model.layers) result.unit_names.push_back(l.name);
  }

  const std::size_t threads = thread_count_from_env(workers);
  std::uint64_t floats_cum = 0, iters_cum = 0;
  std::size_t batch = config.batch_per_worker;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, config, batch);
    const std::vector<Level> layer_levels = levels_for_epoch();

    // Scheduler-facing levels for this epoch (batch mode reports the batch).
    std::vector<Level> unit_levels;
    if (batch_mode) {
      unit_levels.push_back(
          Level{Scheme::BatchSize, static_cast<double>(batch)});
    } else if (config.adaptive) {
      unit_levels = layer_levels;
    } else {
      unit_levels = layer_levels;
    }

    // Per-epoch reshuffle inside each worker's fixed shard.
    std::vector<std::vector<std::size_t>> order(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      order[w] = shards[w];
      Rng rng(Rng::derive(config.seed, {0x5bu, w, epoch}));
      shuffle_indices(order[w], rng);
    }

    std::size_t iters = order[0].size() / batch;
    for (std::size_t w = 1; w < workers; ++w)
      iters = std::min(iters, order[w].size() / batch);
    if (iters == 0) throw ConfigError("shard smaller than one batch");

    std::vector<Tensor> epoch_accum;
    for (const auto& l : model.layers)
      epoch_accum.emplace_back(l.value.rows(), l.value.cols());

    double loss_sum = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
      std::vector<double> losses(workers, 0.0);
      std::vector<std::vector<CompressedMessage>> msgs(workers);
      std::vector<GradientSet> raw;
      std::vector<std::vector<Tensor>> res_before, res_after;
      const bool observing = static_cast<bool>(hooks.on_step);
      if (observing) {
        raw.resize(workers);
        res_before.resize(workers);
        res_after.resize(workers);
      }

      std::atomic<bool> numeric_failure{false};
      auto worker_task = [&](std::size_t w) {
        std::span<const std::size_t> idx(order[w].data() + it * batch, batch);
        LossGrad lg;
        try {
          lg = loss_and_grad(model, data, idx);
        } catch (const NumericError&) {
          numeric_failure = true;
          return;
        }
        losses[w] = lg.loss;
        msgs[w].reserve(layer_count);
        for (std::size_t li = 0; li < layer_count; ++li) {
          const auto& layer = model.layers[li];
          if (observing)
            res_before[w].push_back(
                states[w].layer(layer.name, layer.value.rows(), layer.value.cols())
                    .residual);
          msgs[w].push_back(compress(lg.grads.grads[li], layer_levels[li],
                                     states[w], layer.name));
          if (observing)
            res_after[w].push_back(
                states[w].layer(layer.name, layer.value.rows(), layer.value.cols())
                    .residual);
        }
        if (observing) raw[w] = std::move(lg.grads);
      };

      if (threads <= 1) {
        for (std::size_t w = 0; w < workers; ++w) worker_task(w);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
          pool.emplace_back([&, t]() {
            for (std::size_t w = t; w < workers; w += threads) worker_task(w);
          });
        }
        for (auto& th : pool) th.join();
      }

      if (numeric_failure) throw DivergenceError(epoch, it);
      const double loss = tree_sum(losses, 0, losses.size()) /
                          static_cast<double>(workers);
      if (!std::isfinite(loss)) throw DivergenceError(epoch, it);
      loss_sum += loss;

      // Coordinator: aggregate, momentum step, bookkeeping.
      std::vector<Tensor> agg;
      agg.reserve(layer_count);
      for (std::size_t li = 0; li < layer_count; ++li) {
        std::vector<CompressedMessage> layer_msgs;
        layer_msgs.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
          if (li >= msgs[w].size())
            throw ProtocolError("missing message from worker " + std::to_string(w));
          layer_msgs.push_back(msgs[w][li]);
          floats_cum += msgs[w][li].float_count;
        }
        agg.push_back(aggregate_layer(layer_msgs, model.layers[li].value.rows(),
                                      model.layers[li].value.cols()));
      }

      if (observing) {
        StepObservation obs;
        obs.epoch = epoch;
        obs.iter = it;
        obs.raw_grads = std::move(raw);
        obs.residual_before = std::move(res_before);
        obs.residual_after = std::move(res_after);
        obs.decompressed.resize(workers);
        for (std::size_t w = 0; w < workers; ++w)
          for (std::size_t li = 0; li < layer_count; ++li)
            obs.decompressed[w].push_back(
                decompress(msgs[w][li], model.layers[li].value.rows(),
                           model.layers[li].value.cols()));
        hooks.on_step(obs);
      }

      for (std::size_t li = 0; li < layer_count; ++li) {
        Tensor& v = momentum_buf[li];
        const Tensor& g = agg[li];
        Tensor& w = model.layers[li].value;
        if (config.momentum > 0.0) {
          v *= config.momentum;
          v += g;
          // Nesterov: step along g + mu * v.
          for (std::size_t i = 0; i < w.size(); ++i)
            w[i] -= lr * (g[i] + config.momentum * v[i]);
        } else {
          for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
        }
        if (!w.all_finite()) throw DivergenceError(epoch, it);
        epoch_accum[li] += g;
      }

      if (sched) {
        if (batch_mode) {
          Tensor flat(model.param_count(), 1);
          std::size_t off = 0;
          for (const auto& g : agg)
            for (double x : g.data()) flat[off++] = x;
          sched->accumulate("model", flat);
        } else {
          for (std::size_t li = 0; li < layer_count; ++li)
            sched->accumulate(model.layers[li].name, agg[li]);
        }
      }
    }

    iters_cum += iters;
    double norm_sq = 0.0;
    for (const auto& t : epoch_accum) {
      const double n = norm2(t);
      norm_sq += n * n;
    }
    result.epoch_grad_norms.push_back(std::sqrt(norm_sq));

    MetricsRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(iters);
    row.eval_metric = evaluate(model, data);
    row.lr = lr;
    row.level_summary = rle_levels(unit_levels);
    row.floats_cumulative = floats_cum;
    row.iterations_cumulative = iters_cum;
    result.metrics.push_back(row);
    result.level_trace.push_back(unit_levels);

    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0)
      result.checkpoints.push_back(model);

    if (sched) {
      const double lr_next = (epoch + 1 < config.epochs)
                                 ? lr_schedule(epoch + 1, config, batch)
                                 : lr;
      auto decisions = sched->end_of_epoch(lr, lr_next, epoch);
      if (batch_mode) {
        const auto next_b =
            static_cast<std::size_t>(decisions.front().level.value);
        batch = next_b;
      }
    }
  }

  result.total_floats = floats_cum;
  result.final_model = std::move(model);
  return result;
}

std::string metrics_csv_header() {
  return "epoch,train_loss,eval_metric,lr,levels,floats_cumulative,iters_cumulative";
}

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::string out = metrics_csv_header() + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + ",";
    out += format_double(r.train_loss) + ",";
    out += format_double(r.eval_metric) + ",";
    out += format_double(r.lr) + ",";
    out += r.level_summary + ",";
    out += std::to_string(r.floats_cumulative) + ",";
    out += std::to_string(r.iterations_cumulative) + "\n";
  }
  return out;
}

}  // namespace accordion
