#include "accordion/compressor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <iostream>
#include <numeric>

namespace accordion {

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::Dense: return "dense";
    case Scheme::TopK: return "topk";
    case Scheme::PowerSgd: return "powersgd";
    case Scheme::BatchSize: return "batchsize";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "dense") return Scheme::Dense;
  if (s == "topk") return Scheme::TopK;
  if (s == "powersgd") return Scheme::PowerSgd;
  if (s == "batchsize") return Scheme::BatchSize;
  throw ConfigError("unknown compression scheme: " + s);
}

std::string to_string(const Level& l) {
  switch (l.scheme) {
    case Scheme::Dense: return "dense";
    case Scheme::TopK: {
      char buf[48];
      std::snprintf(buf, sizeof buf, "topk:%g", l.value);
      return buf;
    }
    case Scheme::PowerSgd:
      return "powersgd:" + std::to_string(static_cast<long long>(l.value));
    case Scheme::BatchSize:
      return "batch:" + std::to_string(static_cast<long long>(l.value));
  }
  return "?";
}

Level level_from_string(const std::string& s) {
  const auto colon = s.find(':');
  const std::string head = s.substr(0, colon);
  Level l;
  if (head == "dense") {
    l.scheme = Scheme::Dense;
    return l;
  }
  if (colon == std::string::npos)
    throw ConfigError("level needs a value, e.g. powersgd:2 or topk:0.25: " + s);
  const double v = std::stod(s.substr(colon + 1));
  if (head == "topk") {
    l.scheme = Scheme::TopK;
  } else if (head == "powersgd") {
    l.scheme = Scheme::PowerSgd;
  } else if (head == "batch" || head == "batchsize") {
    l.scheme = Scheme::BatchSize;
  } else {
    throw ConfigError("unknown level scheme: " + s);
  }
  l.value = v;
  return l;
}

namespace {

std::size_t topk_keep(double k_fraction, std::size_t d) {
  const std::size_t k =
      static_cast<std::size_t>(std::ceil(k_fraction * static_cast<double>(d)));
  return std::min(std::max<std::size_t>(k, 1), d);
}

bool is_one_dimensional(std::size_t rows, std::size_t cols) {
  return cols == 1 || rows == 1;
}

}  // namespace

std::size_t float_count(const Level& level, std::size_t rows, std::size_t cols) {
  const std::size_t d = rows * cols;
  if (is_one_dimensional(rows, cols)) return d;
  switch (level.scheme) {
    case Scheme::Dense:
    case Scheme::BatchSize:
      return d;
    case Scheme::TopK:
      return 2 * topk_keep(level.value, d);
    case Scheme::PowerSgd: {
      const auto r = static_cast<std::size_t>(level.value);
      return r * (rows + cols);
    }
  }
  return d;
}

CompressorState::LayerState& CompressorState::layer(const std::string& id,
                                                    std::size_t rows,
                                                    std::size_t cols) {
  auto it = layers_.find(id);
  if (it == layers_.end()) {
    LayerState st;
    st.residual = Tensor(rows, cols);
    it = layers_.emplace(id, std::move(st)).first;
  }
  if (it->second.residual.rows() != rows || it->second.residual.cols() != cols)
    throw ShapeError("layer " + id + " registered with a different shape");
  return it->second;
}

namespace {

// Warm-start factor adjusted to a new rank: columns dropped going down,
// fresh seeded orthonormal columns appended going up.
Tensor resize_warm_start(const Tensor& q_prev, std::size_t rank, Rng& rng) {
  const std::size_t n = q_prev.rows();
  const std::size_t rc = q_prev.cols();
  if (rc == rank) return q_prev;
  Tensor out(n, rank);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < std::min(rc, rank); ++j) out(i, j) = q_prev(i, j);
  if (rank > rc) {
    Tensor extra = random_normal(n, rank - rc, rng);
    Tensor ortho = orthonormalize(extra).q;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = rc; j < rank; ++j) out(i, j) = ortho(i, j - rc);
  }
  return out;
}

CompressedMessage compress_dense(const Tensor& a, const std::string& layer_id) {
  CompressedMessage msg;
  msg.layer_id = layer_id;
  msg.scheme = Scheme::Dense;
  msg.rows = a.rows();
  msg.cols = a.cols();
  msg.dense = a.data();
  msg.float_count = a.size();
  return msg;
}

}  // namespace

CompressedMessage compress(const Tensor& g, const Level& level,
                           CompressorState& state, const std::string& layer_id) {
  auto& ls = state.layer(layer_id, g.rows(), g.cols());
  Tensor a = g + ls.residual;

  const bool always_dense = is_one_dimensional(g.rows(), g.cols()) ||
                            level.scheme == Scheme::Dense ||
                            level.scheme == Scheme::BatchSize;
  if (always_dense) {
    CompressedMessage msg = compress_dense(a, layer_id);
    ls.residual = Tensor(g.rows(), g.cols());
    return msg;
  }

  CompressedMessage msg;
  msg.layer_id = layer_id;
  msg.scheme = level.scheme;
  msg.rows = g.rows();
  msg.cols = g.cols();

  if (level.scheme == Scheme::TopK) {
    const std::size_t d = a.size();
    if (level.value <= 0.0 || level.value > 1.0)
      throw ConfigError("topk fraction must be in (0, 1], got " +
                        std::to_string(level.value));
    static std::atomic<bool> warned_small_k{false};
    if (level.value * static_cast<double>(d) < 1.0 &&
        !warned_small_k.exchange(true)) {
      std::cerr << "warning: topk K*d < 1 on layer " << layer_id
                << ", sending a single entry\n";
    }
    const std::size_t k = topk_keep(level.value, d);
    std::vector<std::uint32_t> order(d);
    std::iota(order.begin(), order.end(), 0u);
    // Largest magnitudes first, ties broken toward the lower index.
    std::nth_element(order.begin(), order.begin() + (k - 1), order.end(),
                     [&a](std::uint32_t x, std::uint32_t y) {
                       const double ax = std::abs(a[x]), ay = std::abs(a[y]);
                       if (ax != ay) return ax > ay;
                       return x < y;
                     });
    order.resize(k);
    std::sort(order.begin(), order.end());
    msg.indices = order;
    msg.values.reserve(k);
    for (std::uint32_t idx : order) msg.values.push_back(a[idx]);
    msg.float_count = 2 * k;

    Tensor residual = a;
    for (std::uint32_t idx : order) residual[idx] = 0.0;
    ls.residual = std::move(residual);
    return msg;
  }

  // PowerSGD: one power-iteration step against the warm-started factor.
  const auto rank = static_cast<std::size_t>(level.value);
  const std::size_t m = a.rows(), n = a.cols();
  if (rank < 1 || rank > std::min(m, n))
    throw ConfigError("powersgd rank " + std::to_string(rank) +
                      " invalid for layer " + layer_id + " of shape " +
                      a.shape_str());
  Tensor q_start;
  if (ls.has_q) {
    q_start = resize_warm_start(ls.q_prev, rank, state.rng());
  } else {
    q_start = random_normal(n, rank, state.rng());
  }
  Tensor p_hat = orthonormalize(matmul(a, q_start)).q;
  Tensor q_new = matmul(transpose(a), p_hat);
  Tensor recon = matmul(p_hat, transpose(q_new));

  msg.p = p_hat;
  msg.q = q_new;
  msg.float_count = rank * (m + n);

  ls.q_prev = msg.q;
  ls.has_q = true;
  ls.residual = a - recon;
  return msg;
}

Tensor decompress(const CompressedMessage& msg, std::size_t rows,
                  std::size_t cols) {
  if (msg.rows != rows || msg.cols != cols)
    throw ShapeError("decompress: message shape " + std::to_string(msg.rows) +
                     "x" + std::to_string(msg.cols) +
                     " does not match layer shape " + std::to_string(rows) +
                     "x" + std::to_string(cols));
  return decompress(msg);
}

Tensor decompress(const CompressedMessage& msg) {
  switch (msg.scheme) {
    case Scheme::Dense:
    case Scheme::BatchSize: {
      if (msg.dense.size() != msg.rows * msg.cols)
        throw CorruptMessageError("dense payload size mismatch on layer " +
                                  msg.layer_id);
      return Tensor(msg.rows, msg.cols, msg.dense);
    }
    case Scheme::TopK: {
      Tensor out(msg.rows, msg.cols);
      const std::size_t d = out.size();
      if (msg.indices.size() != msg.values.size())
        throw CorruptMessageError("topk payload size mismatch on layer " +
                                  msg.layer_id);
      for (std::size_t i = 0; i < msg.indices.size(); ++i) {
        if (msg.indices[i] >= d)
          throw CorruptMessageError("topk index " + std::to_string(msg.indices[i]) +
                                    " out of range on layer " + msg.layer_id);
        out[msg.indices[i]] = msg.values[i];
      }
      return out;
    }
    case Scheme::PowerSgd:
      return matmul(msg.p, transpose(msg.q));
  }
  throw CorruptMessageError("unknown scheme tag");
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;

  std::uint8_t u8() {
    if (pos + 1 > buf.size()) throw CorruptMessageError("truncated message");
    return buf[pos++];
  }
  std::uint32_t u32() {
    if (pos + 4 > buf.size()) throw CorruptMessageError("truncated message");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos++]) << (8 * i);
    return v;
  }
  double f64() {
    if (pos + 8 > buf.size()) throw CorruptMessageError("truncated message");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos++]) << (8 * i);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
};

std::uint8_t scheme_tag(Scheme s) {
  switch (s) {
    case Scheme::Dense: return 0;
    case Scheme::TopK: return 1;
    case Scheme::PowerSgd: return 2;
    case Scheme::BatchSize: return 3;
  }
  return 255;
}

Scheme scheme_from_tag(std::uint8_t t) {
  switch (t) {
    case 0: return Scheme::Dense;
    case 1: return Scheme::TopK;
    case 2: return Scheme::PowerSgd;
    case 3: return Scheme::BatchSize;
  }
  throw CorruptMessageError("bad scheme tag " + std::to_string(t));
}

}  // namespace

std::vector<std::uint8_t> to_bytes(const CompressedMessage& msg) {
  std::vector<std::uint8_t> out;
  out.push_back(scheme_tag(msg.scheme));
  put_u32(out, static_cast<std::uint32_t>(msg.layer_id.size()));
  out.insert(out.end(), msg.layer_id.begin(), msg.layer_id.end());
  put_u32(out, static_cast<std::uint32_t>(msg.rows));
  put_u32(out, static_cast<std::uint32_t>(msg.cols));
  switch (msg.scheme) {
    case Scheme::Dense:
    case Scheme::BatchSize:
      for (double v : msg.dense) put_f64(out, v);
      break;
    case Scheme::TopK:
      put_u32(out, static_cast<std::uint32_t>(msg.indices.size()));
      for (std::uint32_t i : msg.indices) put_u32(out, i);
      for (double v : msg.values) put_f64(out, v);
      break;
    case Scheme::PowerSgd:
      put_u32(out, static_cast<std::uint32_t>(msg.p.cols()));
      for (double v : msg.p.data()) put_f64(out, v);
      for (double v : msg.q.data()) put_f64(out, v);
      break;
  }
  return out;
}

CompressedMessage from_bytes(const std::vector<std::uint8_t>& bytes) {
  Reader rd{bytes};
  CompressedMessage msg;
  msg.scheme = scheme_from_tag(rd.u8());
  const std::uint32_t id_len = rd.u32();
  if (rd.pos + id_len > bytes.size()) throw CorruptMessageError("truncated message");
  msg.layer_id.assign(bytes.begin() + rd.pos, bytes.begin() + rd.pos + id_len);
  rd.pos += id_len;
  msg.rows = rd.u32();
  msg.cols = rd.u32();
  switch (msg.scheme) {
    case Scheme::Dense:
    case Scheme::BatchSize: {
      msg.dense.resize(msg.rows * msg.cols);
      for (double& v : msg.dense) v = rd.f64();
      msg.float_count = msg.dense.size();
      break;
    }
    case Scheme::TopK: {
      const std::uint32_t k = rd.u32();
      msg.indices.resize(k);
      msg.values.resize(k);
      for (auto& i : msg.indices) i = rd.u32();
      for (auto& v : msg.values) v = rd.f64();
      msg.float_count = 2 * static_cast<std::size_t>(k);
      break;
    }
    case Scheme::PowerSgd: {
      const std::uint32_t r = rd.u32();
      msg.p = Tensor(msg.rows, r);
      msg.q = Tensor(msg.cols, r);
      for (double& v : msg.p.data()) v = rd.f64();
      for (double& v : msg.q.data()) v = rd.f64();
      msg.float_count = r * (msg.rows + msg.cols);
      break;
    }
  }
  if (rd.pos != bytes.size()) throw CorruptMessageError("trailing bytes in message");
  return msg;
}

}  // namespace accordion
