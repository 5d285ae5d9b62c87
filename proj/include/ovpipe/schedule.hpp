#pragma once
// Training-support math: the inverse square-root learning-rate schedule
// with optional linear cooldown, and weight-space checkpoint ensembling
// with a bit-exact container format.

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ovpipe {

struct CooldownPhase {
  long long start = 0;  // step at which the linear decay begins
  long long steps = 1;  // steps until the rate reaches zero
};

struct ScheduleConfig {
  double peak_lr = 0.0;
  long long timescale = 10000;
  std::optional<CooldownPhase> cooldown;

  void validate() const {
    if (peak_lr <= 0.0) throw std::invalid_argument("schedule: peak_lr <= 0");
    if (timescale <= 0) throw std::invalid_argument("schedule: timescale <= 0");
    if (cooldown) {
      if (cooldown->start < 0) {
        throw std::invalid_argument("schedule: cooldown start < 0");
      }
      if (cooldown->steps <= 0) {
        throw std::invalid_argument("schedule: cooldown steps <= 0");
      }
    }
  }
};

// Inverse square-root decay with a plateau: the rate stays at peak_lr
// through `timescale` steps, then decays as sqrt(timescale / t). During a
// cooldown the rate is additionally multiplied by a linear ramp that
// reaches exactly zero at start + steps.
inline double lr_at(long long step, const ScheduleConfig& s) {
  s.validate();
  if (step < 0) throw std::invalid_argument("lr_at: negative step");
  const double t = static_cast<double>(std::max(step, s.timescale));
  double lr = s.peak_lr * std::sqrt(static_cast<double>(s.timescale) / t);
  if (s.cooldown && step >= s.cooldown->start) {
    const double frac = static_cast<double>(step - s.cooldown->start) /
                        static_cast<double>(s.cooldown->steps);
    lr *= std::max(0.0, 1.0 - frac);
  }
  return lr;
}

// Named map of flat parameter arrays. Values are kept as doubles in
// memory; the container format stores 32-bit floats.
struct Checkpoint {
  struct Param {
    std::vector<long long> shape;
    std::vector<double> values;
  };
  std::map<std::string, Param> params;
};

// Per-parameter linear interpolation: (1 - alpha) * a + alpha * b, where
// alpha weights the second (fine-tuned) checkpoint. The endpoints return
// the corresponding input unchanged.
inline Checkpoint weight_average(const Checkpoint& a, const Checkpoint& b,
                                 double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("weight_average: alpha not in [0,1]");
  }
  std::vector<std::string> offending;
  for (const auto& [name, pa] : a.params) {
    auto it = b.params.find(name);
    if (it == b.params.end() || it->second.shape != pa.shape ||
        it->second.values.size() != pa.values.size()) {
      offending.push_back(name);
    }
  }
  for (const auto& [name, pb] : b.params) {
    (void)pb;
    if (!a.params.count(name)) offending.push_back(name);
  }
  if (!offending.empty()) {
    std::string msg = "weight_average: mismatched parameters:";
    for (const auto& n : offending) msg += " " + n;
    throw std::invalid_argument(msg);
  }
  if (alpha == 0.0) return a;
  if (alpha == 1.0) return b;
  Checkpoint out;
  for (const auto& [name, pa] : a.params) {
    const auto& pb = b.params.at(name);
    Checkpoint::Param p;
    p.shape = pa.shape;
    p.values.resize(pa.values.size());
    for (std::size_t i = 0; i < pa.values.size(); ++i) {
      p.values[i] = (1.0 - alpha) * pa.values[i] + alpha * pb.values[i];
    }
    out.params.emplace(name, std::move(p));
  }
  return out;
}

// Container format: magic "OVCK", u32 version, u64 header length, JSON
// header {name: {shape, dtype, offset, count}}, then the concatenated
// little-endian float32 payloads.
namespace ckpt_detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const std::string& s, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(s[pos + i])) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(const std::string& s, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(s[pos + i])) << (8 * i);
  return v;
}

}  // namespace ckpt_detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header = nlohmann::json::object();
  std::string payload;
  std::uint64_t offset = 0;
  for (const auto& [name, p] : ckpt.params) {
    std::uint64_t count = 1;
    for (long long d : p.shape) {
      if (d <= 0) throw std::invalid_argument("checkpoint: non-positive dim in " + name);
      count *= static_cast<std::uint64_t>(d);
    }
    if (count != p.values.size()) {
      throw std::invalid_argument("checkpoint: value count does not match shape of " + name);
    }
    header[name] = {{"shape", p.shape},
                    {"dtype", "f32"},
                    {"offset", offset},
                    {"count", count}};
    for (double v : p.values) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      ckpt_detail::put_u32(payload, bits);
    }
    offset += count * 4;
  }
  const std::string header_str = header.dump();
  std::string out = "OVCK";
  ckpt_detail::put_u32(out, 1);
  ckpt_detail::put_u64(out, header_str.size());
  out += header_str;
  out += payload;
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 4, "OVCK") != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  const std::uint32_t version = ckpt_detail::get_u32(bytes, 4);
  if (version != 1) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint64_t header_len = ckpt_detail::get_u64(bytes, 8);
  if (16 + header_len > bytes.size()) {
    throw std::runtime_error("checkpoint: truncated header");
  }
  const auto header = nlohmann::json::parse(bytes.substr(16, header_len));
  const std::size_t data_start = 16 + header_len;
  Checkpoint ckpt;
  for (const auto& [name, meta] : header.items()) {
    Checkpoint::Param p;
    p.shape = meta.at("shape").get<std::vector<long long>>();
    if (meta.at("dtype").get<std::string>() != "f32") {
      throw std::runtime_error("checkpoint: unsupported dtype for " + name);
    }
    const auto offset = meta.at("offset").get<std::uint64_t>();
    const auto count = meta.at("count").get<std::uint64_t>();
    if (data_start + offset + count * 4 > bytes.size()) {
      throw std::runtime_error("checkpoint: truncated payload for " + name);
    }
    p.values.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto bits = ckpt_detail::get_u32(bytes, data_start + offset + i * 4);
      p.values[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    ckpt.params.emplace(name, std::move(p));
  }
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace ovpipe
