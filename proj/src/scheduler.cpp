#include "accordion/scheduler.hpp"

#include <algorithm>
#include <cmath>

namespace accordion {

std::string to_string(ScheduleMode m) {
  return m == ScheduleMode::Compression ? "compression" : "batchsize";
}

bool decide_critical(double delta_prev_norm, double delta_curr_norm,
                     double gamma_curr, double gamma_next, double eta) {
  if (gamma_next < gamma_curr) return true;
  if (delta_prev_norm == 0.0) {
    // No usable baseline: any signal counts as critical, none does not.
    return delta_curr_norm > 0.0;
  }
  const double rel = std::abs(delta_prev_norm - delta_curr_norm) / delta_prev_norm;
  return rel >= eta;
}

Level decide(double delta_prev_norm, double delta_curr_norm, double gamma_curr,
             double gamma_next, const SchedulerConfig& config) {
  return decide_critical(delta_prev_norm, delta_curr_norm, gamma_curr,
                         gamma_next, config.eta)
             ? config.level_low
             : config.level_high;
}

Level initial_level(const SchedulerConfig& config) { return config.level_low; }

void SchedulerState::register_unit(const std::string& unit_id, std::size_t rows,
                                   std::size_t cols) {
  for (const auto& id : order_)
    if (id == unit_id) return;
  order_.push_back(unit_id);
  Unit u;
  u.delta_curr = Tensor(rows, cols);
  u.level = initial_level(config_);
  units_.push_back(std::move(u));
}

SchedulerState::Unit& SchedulerState::unit(const std::string& id) {
  for (std::size_t i = 0; i < order_.size(); ++i)
    if (order_[i] == id) return units_[i];
  throw std::invalid_argument("unknown scheduler unit: " + id);
}

const SchedulerState::Unit& SchedulerState::unit(const std::string& id) const {
  for (std::size_t i = 0; i < order_.size(); ++i)
    if (order_[i] == id) return units_[i];
  throw std::invalid_argument("unknown scheduler unit: " + id);
}

void SchedulerState::accumulate(const std::string& unit_id, const Tensor& grad) {
  Unit& u = unit(unit_id);
  if (!u.delta_curr.same_shape(grad))
    throw ShapeError("accumulate: unit " + unit_id + " expects " +
                     u.delta_curr.shape_str() + ", got " + grad.shape_str());
  u.delta_curr += grad;
  ++u.accum_count;
}

double SchedulerState::current_norm(const std::string& unit_id) const {
  return norm2(unit(unit_id).delta_curr);
}

Level SchedulerState::apply_monotone(const Unit& u, Level proposed) const {
  // Batch size only ever grows once it has grown (except the initial B_low).
  if (config_.mode == ScheduleMode::BatchSize &&
      config_.batch_monotone_increase && u.level == config_.level_high &&
      proposed == config_.level_low) {
    return config_.level_high;
  }
  return proposed;
}

std::vector<SchedulerState::Decision> SchedulerState::end_of_epoch(
    double lr_curr, double lr_next, std::size_t /*epoch*/) {
  const bool decay = lr_next < lr_curr;

  if (!any_check_done_) {
    // First epoch: only record the baseline norms; levels stay initial.
    for (auto& u : units_) {
      u.prev_norm = norm2(u.delta_curr);
      u.prev_count = std::max<std::size_t>(u.accum_count, 1);
      u.has_prev = true;
    }
    any_check_done_ = true;
    epochs_since_check_ = 0;
  } else {
    ++epochs_since_check_;
    const bool periodic = epochs_since_check_ >= config_.period_epochs;
    if (decay || periodic) {
      for (auto& u : units_) {
        const double curr = norm2(u.delta_curr);
        const std::size_t count = std::max<std::size_t>(u.accum_count, 1);
        Level next;
        if (decay) {
          next = config_.level_low;
        } else {
          // Epochs can hold different iteration counts after a batch switch;
          // the baseline norm is rescaled to the current count before the
          // ratio test.
          const double scaled_prev =
              u.prev_norm * static_cast<double>(count) /
              static_cast<double>(u.prev_count);
          next = decide(scaled_prev, curr, lr_curr, lr_next, config_);
        }
        u.level = apply_monotone(u, next);
        u.prev_norm = curr;
        u.prev_count = count;
      }
      epochs_since_check_ = 0;
    }
  }

  std::vector<Decision> decisions;
  decisions.reserve(order_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) {
    decisions.push_back({order_[i], units_[i].level});
    units_[i].delta_curr = Tensor(units_[i].delta_curr.rows(),
                                  units_[i].delta_curr.cols());
    units_[i].accum_count = 0;
  }
  return decisions;
}

Level SchedulerState::level_of(const std::string& unit_id) const {
  return unit(unit_id).level;
}

}  // namespace accordion
