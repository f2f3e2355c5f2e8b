#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "accordion/tensor.hpp"

namespace accordion {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorruptMessageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Scheme { Dense, TopK, PowerSgd, BatchSize };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

// One rung of the communication ladder: rank for powersgd, kept fraction for
// topk, per-worker batch size for the batch-size mode. Dense ignores value.
struct Level {
  Scheme scheme = Scheme::Dense;
  double value = 0.0;

  bool operator==(const Level& o) const {
    return scheme == o.scheme && value == o.value;
  }
};

std::string to_string(const Level& l);
Level level_from_string(const std::string& s);

// Wire representation of one layer's compressed gradient. Exactly one payload
// group is populated, matching `scheme`.
struct CompressedMessage {
  std::string layer_id;
  Scheme scheme = Scheme::Dense;
  std::size_t rows = 0, cols = 0;  // layer shape

  std::vector<double> dense;           // dense payload
  std::vector<std::uint32_t> indices;  // topk, strictly increasing
  std::vector<double> values;          // topk, aligned with indices
  Tensor p;                            // powersgd left factor, m x r, orthonormal
  Tensor q;                            // powersgd right factor, n x r

  std::size_t float_count = 0;
};

// Number of payload scalars a level costs on a layer of the given shape.
// Indices count as one scalar each; 1-D layers always go dense.
std::size_t float_count(const Level& level, std::size_t rows, std::size_t cols);

// Per-layer error-feedback residual plus the PowerSGD warm-start factor.
// Owned by exactly one worker.
class CompressorState {
 public:
  explicit CompressorState(std::uint64_t seed) : seed_(seed), rng_(seed) {}

  struct LayerState {
    Tensor residual;
    Tensor q_prev;
    bool has_q = false;
  };

  LayerState& layer(const std::string& id, std::size_t rows, std::size_t cols);
  const std::map<std::string, LayerState>& layers() const { return layers_; }
  Rng& rng() { return rng_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  Rng rng_;
  std::map<std::string, LayerState> layers_;
};

// Compresses g + residual under `level`, updating the residual so that
// decompress(msg) + residual' == g + residual exactly.
CompressedMessage compress(const Tensor& g, const Level& level,
                           CompressorState& state, const std::string& layer_id);

Tensor decompress(const CompressedMessage& msg, std::size_t rows,
                  std::size_t cols);
Tensor decompress(const CompressedMessage& msg);

// Canonical byte form: tag byte, little-endian u32 sizes/indices, little-endian
// f64 reals. Used for accounting checks and dumps, not as a network protocol.
std::vector<std::uint8_t> to_bytes(const CompressedMessage& msg);
CompressedMessage from_bytes(const std::vector<std::uint8_t>& bytes);

}  // namespace accordion
