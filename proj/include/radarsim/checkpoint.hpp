#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "radarsim/io.hpp"
#include "radarsim/models.hpp"
#include "radarsim/nn/tensor.hpp"

namespace radarsim {

namespace detail {

inline uint64_t fnv1a(const char* data, size_t n) {
  uint64_t h = 1469598103934665603ull;
  for (size_t k = 0; k < n; ++k) {
    h ^= static_cast<unsigned char>(data[k]);
    h *= 1099511628211ull;
  }
  return h;
}

struct BufWriter {
  std::string buf;
  void bytes(const void* p, size_t n) { buf.append(static_cast<const char*>(p), n); }
  void u32(uint32_t v) { bytes(&v, 4); }
  void u64(uint64_t v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void f32s(const std::vector<float>& v) { bytes(v.data(), v.size() * 4); }
};

struct BufReader {
  const char* p;
  const char* end;
  explicit BufReader(const std::string& s) : p(s.data()), end(s.data() + s.size()) {}
  void bytes(void* out, size_t n) {
    if (static_cast<size_t>(end - p) < n) throw std::runtime_error("checkpoint: truncated");
    std::memcpy(out, p, n);
    p += n;
  }
  uint32_t u32() {
    uint32_t v;
    bytes(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::string str() {
    uint32_t n = u32();
    if (static_cast<size_t>(end - p) < n) throw std::runtime_error("checkpoint: truncated");
    std::string s(p, n);
    p += n;
    return s;
  }
  void f32s(std::vector<float>& v) { bytes(v.data(), v.size() * 4); }
};

}  // namespace detail

// Replay pool of detached generator outputs queried by the discriminators.
// Once full, each query returns either the incoming frame (p = 1/2) or a
// stored frame swapped out for the incoming one.
class ImagePool {
 public:
  ImagePool() : ImagePool(50, Rng::stream(0, "pool")) {}
  ImagePool(int capacity, Rng rng) : capacity_(capacity), rng_(rng) {
    if (capacity < 1) throw std::invalid_argument("ImagePool: capacity must be >= 1");
  }

  nn::Tensor<float> query(const nn::Tensor<float>& item) {
    if (static_cast<int>(stored_.size()) < capacity_) {
      stored_.push_back(item);
      return item;
    }
    if (rng_.bernoulli(0.5)) {
      const uint64_t k = rng_.below(stored_.size());
      nn::Tensor<float> out = stored_[k];
      stored_[k] = item;
      return out;
    }
    return item;
  }

  int capacity() const { return capacity_; }
  const std::vector<nn::Tensor<float>>& stored() const { return stored_; }
  Rng& rng() { return rng_; }

  void serialize(detail::BufWriter& w) const {
    w.u64(rng_.state());
    w.u32(static_cast<uint32_t>(capacity_));
    w.u32(static_cast<uint32_t>(stored_.size()));
    for (const auto& t : stored_) {
      w.u32(static_cast<uint32_t>(t.n));
      w.u32(static_cast<uint32_t>(t.c));
      w.u32(static_cast<uint32_t>(t.h));
      w.u32(static_cast<uint32_t>(t.w));
      w.f32s(t.v);
    }
  }

  void deserialize(detail::BufReader& r) {
    rng_.set_state(r.u64());
    capacity_ = static_cast<int>(r.u32());
    const uint32_t n = r.u32();
    stored_.clear();
    stored_.reserve(n);
    for (uint32_t k = 0; k < n; ++k) {
      const int tn = static_cast<int>(r.u32());
      const int tc = static_cast<int>(r.u32());
      const int th = static_cast<int>(r.u32());
      const int tw = static_cast<int>(r.u32());
      nn::Tensor<float> t(tn, tc, th, tw);
      r.f32s(t.v);
      stored_.push_back(std::move(t));
    }
  }

 private:
  int capacity_;
  Rng rng_;
  std::vector<nn::Tensor<float>> stored_;
};

namespace detail {

inline void write_group(BufWriter& w, const std::string& name, std::vector<nn::Param<float>*> ps,
                        const nn::AdamGroup& g) {
  w.str(name);
  w.u64(g.t);
  w.u32(static_cast<uint32_t>(ps.size()));
  for (auto* p : ps) {
    w.str(p->name);
    w.u64(p->val.numel());
    w.f32s(p->val.v);
    w.f32s(p->m.v);
    w.f32s(p->v.v);
  }
}

inline void read_group(BufReader& r, const std::string& name, std::vector<nn::Param<float>*> ps,
                       nn::AdamGroup& g) {
  if (r.str() != name) throw std::runtime_error("checkpoint: group name mismatch, expected " + name);
  g.t = r.u64();
  if (r.u32() != ps.size()) throw std::runtime_error("checkpoint: parameter count mismatch in " + name);
  for (auto* p : ps) {
    const std::string pname = r.str();
    if (pname != p->name)
      throw std::runtime_error("checkpoint: parameter name mismatch: " + pname + " vs " + p->name);
    if (r.u64() != p->val.numel())
      throw std::runtime_error("checkpoint: parameter size mismatch in " + pname);
    r.f32s(p->val.v);
    r.f32s(p->m.v);
    r.f32s(p->v.v);
  }
}

}  // namespace detail

constexpr uint32_t checkpoint_format_version = 1;

// Everything the training loop carries across steps; per-step noise and
// shuffles are pure functions of (seed, step), so these fields plus the step
// counter make resumption bit-identical.
inline void save_checkpoint(const std::filesystem::path& path, const ModelParameters& mp,
                            const ImagePool& pool_x, const ImagePool& pool_w,
                            const std::string& config_json) {
  detail::BufWriter w;
  w.bytes("RSCK", 4);
  w.u32(checkpoint_format_version);
  w.str(config_json);
  w.u64(mp.step);
  w.u32(5);
  auto& m = const_cast<ModelParameters&>(mp);
  detail::write_group(w, "theta_x", m.theta_x(), mp.adam_theta_x);
  detail::write_group(w, "theta_w", m.theta_w(), mp.adam_theta_w);
  detail::write_group(w, "beta_x", m.beta_x(), mp.adam_beta_x);
  detail::write_group(w, "beta_w", m.beta_w(), mp.adam_beta_w);
  detail::write_group(w, "alpha", m.alpha(), mp.adam_alpha);
  w.u32(2);
  w.str("pool_x");
  pool_x.serialize(w);
  w.str("pool_w");
  pool_w.serialize(w);
  w.u64(detail::fnv1a(w.buf.data(), w.buf.size()));

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    if (!f) throw std::runtime_error("short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);

  std::filesystem::path side_path = path;
  side_path.replace_extension(".json");
  std::ofstream side(side_path, std::ios::trunc);
  if (!side) throw std::runtime_error("cannot write checkpoint sidecar");
  side << config_json << "\n";
}

// Returns just the embedded config echo, so a caller can construct matching
// models before the full load.
inline std::string peek_checkpoint_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 16) throw std::runtime_error("checkpoint: truncated");
  detail::BufReader r(buf);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "RSCK", 4) != 0) throw std::runtime_error("checkpoint: bad magic");
  if (r.u32() != checkpoint_format_version)
    throw std::runtime_error("checkpoint: unsupported format version");
  return r.str();
}

// Restores into a ModelParameters built from the same configs; returns the
// config echo stored at save time. Refuses mismatched or corrupt files.
inline std::string load_checkpoint(const std::filesystem::path& path, ModelParameters& mp,
                                   ImagePool& pool_x, ImagePool& pool_w) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 16) throw std::runtime_error("checkpoint: truncated");
  const uint64_t want = detail::fnv1a(buf.data(), buf.size() - 8);
  uint64_t got;
  std::memcpy(&got, buf.data() + buf.size() - 8, 8);
  if (want != got) throw std::runtime_error("checkpoint: checksum mismatch (corrupt file)");

  detail::BufReader r(buf);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "RSCK", 4) != 0) throw std::runtime_error("checkpoint: bad magic");
  if (r.u32() != checkpoint_format_version)
    throw std::runtime_error("checkpoint: unsupported format version");
  const std::string config_json = r.str();
  mp.step = r.u64();
  if (r.u32() != 5) throw std::runtime_error("checkpoint: unexpected group count");
  detail::read_group(r, "theta_x", mp.theta_x(), mp.adam_theta_x);
  detail::read_group(r, "theta_w", mp.theta_w(), mp.adam_theta_w);
  detail::read_group(r, "beta_x", mp.beta_x(), mp.adam_beta_x);
  detail::read_group(r, "beta_w", mp.beta_w(), mp.adam_beta_w);
  detail::read_group(r, "alpha", mp.alpha(), mp.adam_alpha);
  if (r.u32() != 2) throw std::runtime_error("checkpoint: unexpected pool count");
  if (r.str() != "pool_x") throw std::runtime_error("checkpoint: pool name mismatch");
  pool_x.deserialize(r);
  if (r.str() != "pool_w") throw std::runtime_error("checkpoint: pool name mismatch");
  pool_w.deserialize(r);
  return config_json;
}

}  // namespace radarsim
