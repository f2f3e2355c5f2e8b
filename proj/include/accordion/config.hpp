#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "accordion/model.hpp"
#include "accordion/simulator.hpp"

namespace accordion {

// Flat dotted-key configuration: one `key = value` per line, '#' comments.
// Keys must all be consumed by the spec builder; leftovers are typos and get
// rejected by name.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse_string(const std::string& text);
  static KvConfig parse_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback);
  double get_double(const std::string& key, double fallback);
  std::size_t get_count(const std::string& key, std::size_t fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<std::size_t> get_count_list(const std::string& key,
                                          const std::vector<std::size_t>& fallback);
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback);

  // Keys present but never read by any getter.
  std::vector<std::string> unconsumed() const;

  // Sorted `key = value` lines.
  std::string serialize() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
};

// Everything a training run needs: model and dataset generators plus the
// simulator configuration.
struct RunSpec {
  std::string label = "run";

  std::string model_kind = "mlp";
  std::size_t hidden = 16;
  std::size_t outputs = 2;
  double lambda = 0.0;

  std::string data_kind = "two_gaussian";
  std::size_t dim = 20;
  std::size_t n = 512;
  double sigma = 0.9;
  std::size_t mu_nonzeros = 4;
  double mu_scale = 1.0;
  double noise = 0.1;

  TrainConfig train;

  std::string report_format = "csv";
};

RunSpec spec_from_config(KvConfig& config);
KvConfig spec_to_config(const RunSpec& spec);

Model build_model(const RunSpec& spec);
Dataset build_dataset(const RunSpec& spec);

// The default experiment: the 4-worker MLP on two-Gaussian data with warmup,
// two decays and the powersgd 2/1 ladder, scaled to 30 epochs.
RunSpec canonical_run_spec();

// True when two specs may be compared (same data generator and seed).
bool comparable_specs(const RunSpec& a, const RunSpec& b);

}  // namespace accordion
