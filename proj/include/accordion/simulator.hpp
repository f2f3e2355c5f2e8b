#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "accordion/compressor.hpp"
#include "accordion/model.hpp"
#include "accordion/scheduler.hpp"

namespace accordion {

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
  DivergenceError(std::size_t epoch_, std::size_t iter_)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch_) +
                           ", iteration " + std::to_string(iter_)),
        epoch(epoch_),
        iter(iter_) {}
  std::size_t epoch;
  std::size_t iter;
};

struct TrainConfig {
  std::size_t workers = 4;
  std::size_t epochs = 1;
  std::size_t batch_per_worker = 8;
  double base_lr = 0.1;
  // Global batch the base_lr refers to; 0 means the run's own initial global
  // batch (so the warmup target equals base_lr until a batch switch).
  std::size_t reference_global_batch = 0;
  std::size_t warmup_epochs = 5;
  std::vector<std::size_t> decay_epochs;
  double decay_factor = 10.0;
  double momentum = 0.9;  // Nesterov
  std::optional<SchedulerConfig> adaptive;  // exactly one of these two
  std::optional<Level> static_level;
  std::uint64_t seed = 1;
  // Snapshot the model after every k-th epoch (0 = off).
  std::size_t checkpoint_every = 0;
};

struct MetricsRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double eval_metric = 0.0;
  double lr = 0.0;
  std::string level_summary;  // run-length encoded per-unit levels
  std::uint64_t floats_cumulative = 0;
  std::uint64_t iterations_cumulative = 0;
};

struct RunResult {
  Model final_model;
  std::vector<MetricsRow> metrics;
  std::vector<std::string> unit_names;
  std::vector<std::vector<Level>> level_trace;  // [epoch][unit]
  std::vector<double> epoch_grad_norms;  // whole-model accumulated-gradient norm
  std::vector<Model> checkpoints;        // snapshots per checkpoint_every
  std::uint64_t total_floats = 0;
};

// Learning rate for an epoch: warmup ramps base_lr to the batch-scaled target
// over warmup_epochs, then each passed decay epoch divides by decay_factor.
// A batch switch rescales the target by the batch ratio from that epoch on.
double lr_schedule(std::size_t epoch, const TrainConfig& config,
                   std::size_t current_batch_per_worker);

// Mean of decompressed messages, one per worker for one layer, reduced in a
// fixed pairwise tree over worker index.
Tensor aggregate_layer(const std::vector<CompressedMessage>& worker_msgs,
                       std::size_t rows, std::size_t cols);

// Contiguous equal shards by index; the remainder goes to the last worker.
std::vector<std::vector<std::size_t>> make_shards(std::size_t n,
                                                  std::size_t workers);

// Per-step observer for invariant checks; heavyweight fields are only filled
// when a hook is installed.
struct StepObservation {
  std::size_t epoch = 0;
  std::size_t iter = 0;
  // Per worker, per layer.
  std::vector<GradientSet> raw_grads;
  std::vector<std::vector<Tensor>> decompressed;
  std::vector<std::vector<Tensor>> residual_before;
  std::vector<std::vector<Tensor>> residual_after;
};

struct RunHooks {
  std::function<void(const StepObservation&)> on_step;
};

RunResult run(const TrainConfig& config, Model model, const Dataset& data,
              const RunHooks& hooks = {});

// The frozen CSV contract:
// epoch,train_loss,eval_metric,lr,levels,floats_cumulative,iters_cumulative
std::string metrics_csv_header();
std::string metrics_to_csv(const std::vector<MetricsRow>& rows);

// Worker compute threads honor this environment variable (clamped to the
// worker count); results are identical for any setting.
constexpr const char* kThreadsEnvVar = "ACCORDION_THREADS";

}  // namespace accordion
