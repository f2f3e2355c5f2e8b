#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "accordion/compressor.hpp"
#include "accordion/tensor.hpp"

namespace accordion {

enum class ScheduleMode { Compression, BatchSize };

std::string to_string(ScheduleMode m);

// Two-level adaptive communication schedule. level_low carries strictly more
// communication (higher rank / larger K / smaller batch) than level_high.
struct SchedulerConfig {
  double eta = 0.5;
  std::size_t period_epochs = 10;
  Level level_low;
  Level level_high;
  ScheduleMode mode = ScheduleMode::Compression;
  bool batch_monotone_increase = true;
};

// Critical-regime test on accumulated-gradient norms: the relative change
// between the checkpointed norm and the current norm meets the threshold, or
// the learning rate is about to decay.
bool decide_critical(double delta_prev_norm, double delta_curr_norm,
                     double gamma_curr, double gamma_next, double eta);

Level decide(double delta_prev_norm, double delta_curr_norm, double gamma_curr,
             double gamma_next, const SchedulerConfig& config);

// All runs start on the low (high-fidelity) level: the early phase of
// training is critical.
Level initial_level(const SchedulerConfig& config);

// Per-unit decision state. A unit is a layer in compression mode and the
// whole flattened model in batch-size mode.
class SchedulerState {
 public:
  explicit SchedulerState(SchedulerConfig config) : config_(std::move(config)) {}

  const SchedulerConfig& config() const { return config_; }

  // Registers a unit (idempotent); units keep registration order.
  void register_unit(const std::string& unit_id, std::size_t rows,
                     std::size_t cols);

  // Adds one iteration's applied aggregated gradient to the unit's
  // current-epoch accumulator.
  void accumulate(const std::string& unit_id, const Tensor& grad);

  struct Decision {
    std::string unit_id;
    Level level;
  };

  // Finalizes the epoch: checks fire every period_epochs (against the norm
  // recorded at the previous check) and immediately on a learning-rate decay,
  // which forces level_low everywhere. Current-epoch accumulators reset.
  // Returned decisions are the levels for the next epoch, one per unit.
  std::vector<Decision> end_of_epoch(double lr_curr, double lr_next,
                                     std::size_t epoch);

  Level level_of(const std::string& unit_id) const;
  const std::vector<std::string>& unit_order() const { return order_; }

  // Euclidean norm of the unit's current-epoch accumulator.
  double current_norm(const std::string& unit_id) const;

 private:
  struct Unit {
    Tensor delta_curr;
    std::size_t accum_count = 0;
    bool has_prev = false;
    double prev_norm = 0.0;
    std::size_t prev_count = 1;
    Level level;
  };

  Unit& unit(const std::string& id);
  const Unit& unit(const std::string& id) const;
  Level apply_monotone(const Unit& u, Level proposed) const;

  SchedulerConfig config_;
  std::vector<std::string> order_;
  std::vector<Unit> units_;
  std::size_t epochs_since_check_ = 0;
  bool any_check_done_ = false;
};

}  // namespace accordion
