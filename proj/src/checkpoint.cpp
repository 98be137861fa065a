#include "steer/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace steer {

namespace {

constexpr char kMagic[4] = {'N', 'S', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;

enum Kind : std::uint8_t {
  kF64 = 1,
  kI64 = 2,
  kF64Array = 3,
  kString = 4,
  kMlp = 5,
};

// Explicit little-endian encoding, independent of host byte order.
void w_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}
void w_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}
void w_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v));
  out.push_back(static_cast<char>(v >> 8));
}
void w_f64(std::string& out, double v) {
  w_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size())
      throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 4;
    return v;
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(
        static_cast<unsigned char>(buf[pos]) |
        (static_cast<unsigned char>(buf[pos + 1]) << 8));
    pos += 2;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<unsigned char>(buf[pos++]);
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

template <typename M>
const typename M::mapped_type& get_or_throw(const M& m, const std::string& key,
                                            const char* what) {
  auto it = m.find(key);
  if (it == m.end())
    throw std::out_of_range(std::string("checkpoint: missing ") + what +
                            " entry '" + key + "'");
  return it->second;
}

}  // namespace

void Checkpoint::put_f64(const std::string& key, double v) { f64_[key] = v; }
void Checkpoint::put_i64(const std::string& key, std::int64_t v) {
  i64_[key] = v;
}
void Checkpoint::put_str(const std::string& key, std::string v) {
  str_[key] = std::move(v);
}
void Checkpoint::put_f64s(const std::string& key, std::span<const double> v) {
  f64s_[key].assign(v.begin(), v.end());
}
void Checkpoint::put_mlp(const std::string& key, const Mlp& net) {
  MlpBlob blob;
  blob.cfg = net.config();
  blob.params.assign(net.params().begin(), net.params().end());
  mlp_[key] = std::move(blob);
}

bool Checkpoint::has(const std::string& key) const {
  return f64_.count(key) || i64_.count(key) || str_.count(key) ||
         f64s_.count(key) || mlp_.count(key);
}

double Checkpoint::f64(const std::string& key) const {
  return get_or_throw(f64_, key, "f64");
}
std::int64_t Checkpoint::i64(const std::string& key) const {
  return get_or_throw(i64_, key, "i64");
}
const std::string& Checkpoint::str(const std::string& key) const {
  return get_or_throw(str_, key, "string");
}
const std::vector<double>& Checkpoint::f64s(const std::string& key) const {
  return get_or_throw(f64s_, key, "f64 array");
}

Mlp Checkpoint::mlp(const std::string& key) const {
  const MlpBlob& blob = get_or_throw(mlp_, key, "mlp");
  Rng scratch(0);
  Mlp net(blob.cfg, scratch);
  if (net.param_count() != blob.params.size())
    throw std::runtime_error("checkpoint: mlp parameter count mismatch");
  std::copy(blob.params.begin(), blob.params.end(), net.params().begin());
  return net;
}

void Checkpoint::save(const std::string& path) const {
  std::string out;
  out.append(kMagic, 4);
  w_u32(out, kVersion);
  const std::uint32_t count = static_cast<std::uint32_t>(
      f64_.size() + i64_.size() + str_.size() + f64s_.size() + mlp_.size());
  w_u32(out, count);

  auto put_key = [&out](const std::string& key, Kind kind) {
    w_u16(out, static_cast<std::uint16_t>(key.size()));
    out.append(key);
    out.push_back(static_cast<char>(kind));
  };
  for (const auto& [k, v] : f64_) {
    put_key(k, kF64);
    w_f64(out, v);
  }
  for (const auto& [k, v] : i64_) {
    put_key(k, kI64);
    w_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  for (const auto& [k, v] : str_) {
    put_key(k, kString);
    w_u32(out, static_cast<std::uint32_t>(v.size()));
    out.append(v);
  }
  for (const auto& [k, v] : f64s_) {
    put_key(k, kF64Array);
    w_u64(out, v.size());
    for (double d : v) w_f64(out, d);
  }
  for (const auto& [k, v] : mlp_) {
    put_key(k, kMlp);
    w_u32(out, static_cast<std::uint32_t>(v.cfg.widths.size()));
    for (std::size_t w : v.cfg.widths) w_u64(out, w);
    out.push_back(static_cast<char>(v.cfg.activation));
    out.push_back(v.cfg.layer_norm ? 1 : 0);
    w_u64(out, v.params.size());
    for (double d : v.params) w_f64(out, d);
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("checkpoint: rename failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  Reader r{buf};
  if (r.bytes(4) != std::string(kMagic, 4))
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  const std::uint32_t count = r.u32();

  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t klen = r.u16();
    const std::string key = r.bytes(klen);
    const std::uint8_t kind = r.u8();
    switch (kind) {
      case kF64:
        ck.f64_[key] = r.f64();
        break;
      case kI64:
        ck.i64_[key] = std::bit_cast<std::int64_t>(r.u64());
        break;
      case kString: {
        const std::uint32_t n = r.u32();
        ck.str_[key] = r.bytes(n);
        break;
      }
      case kF64Array: {
        const std::uint64_t n = r.u64();
        std::vector<double> v(n);
        for (std::uint64_t j = 0; j < n; ++j) v[j] = r.f64();
        ck.f64s_[key] = std::move(v);
        break;
      }
      case kMlp: {
        MlpBlob blob;
        const std::uint32_t nw = r.u32();
        blob.cfg.widths.resize(nw);
        for (std::uint32_t j = 0; j < nw; ++j) blob.cfg.widths[j] = r.u64();
        blob.cfg.activation = static_cast<Activation>(r.u8());
        blob.cfg.layer_norm = r.u8() != 0;
        const std::uint64_t n = r.u64();
        blob.params.resize(n);
        for (std::uint64_t j = 0; j < n; ++j) blob.params[j] = r.f64();
        ck.mlp_[key] = std::move(blob);
        break;
      }
      default:
        throw std::runtime_error("checkpoint: unknown entry kind " +
                                 std::to_string(kind));
    }
  }
  if (r.pos != buf.size())
    throw std::runtime_error("checkpoint: trailing bytes in " + path);
  return ck;
}

}  // namespace steer
