#include "steer/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "steer/envs.hpp"

namespace steer {

namespace {

constexpr char kMagic[4] = {'N', 'S', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

void w_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}
void w_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}
void w_f64(std::string& out, double v) {
  w_u64(out, std::bit_cast<std::uint64_t>(v));
}
void w_f64s(std::string& out, const std::vector<double>& v) {
  for (double d : v) w_f64(out, d);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("dataset: truncated file");
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
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  void f64s(std::vector<double>& out, std::size_t n) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f64();
  }
};

}  // namespace

void Dataset::push(std::span<const double> s, std::span<const double> a,
                   double r, std::span<const double> s2, bool done) {
  states.insert(states.end(), s.begin(), s.end());
  actions.insert(actions.end(), a.begin(), a.end());
  rewards.push_back(r);
  next_states.insert(next_states.end(), s2.begin(), s2.end());
  dones.push_back(done ? 1.0 : 0.0);
}

Dataset generate_demos(PointMassEnv& env, double mode_mix,
                       std::size_t n_episodes, Rng& rng) {
  if (n_episodes == 0)
    throw std::invalid_argument("generate_demos: need at least one episode");
  if (mode_mix < 0.0 || mode_mix > 1.0)
    throw std::invalid_argument("generate_demos: mode_mix outside [0,1]");

  Dataset d;
  d.state_dim = 2;
  d.action_dim = 2;
  d.gamma = env.gamma();
  d.env_id = env.id();

  constexpr double kNoiseStd = 0.02;
  std::vector<double> s(2), s2(2), a(2);
  for (std::size_t ep = 0; ep < n_episodes; ++ep) {
    const bool rewarded_goal = rng.uniform() < mode_mix;
    const double gx = rewarded_goal ? PointMassEnv::kGoalX : -PointMassEnv::kGoalX;
    env.reset(rng, s);
    while (true) {
      a[0] = std::clamp((gx - s[0]) + kNoiseStd * rng.normal(),
                        -PointMassEnv::kActionBound, PointMassEnv::kActionBound);
      a[1] = std::clamp((0.0 - s[1]) + kNoiseStd * rng.normal(),
                        -PointMassEnv::kActionBound, PointMassEnv::kActionBound);
      const StepResult res = env.step(a, s2);
      d.push(s, a, res.reward, s2, res.done);
      if (res.done) break;
      s = s2;
    }
  }
  return d;
}

void dataset_save(const Dataset& d, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  w_u32(out, kVersion);
  w_u32(out, d.state_dim);
  w_u32(out, d.action_dim);
  w_f64(out, d.gamma);
  w_u64(out, d.size());
  w_u32(out, static_cast<std::uint32_t>(d.env_id.size()));
  out.append(d.env_id);
  w_f64s(out, d.states);
  w_f64s(out, d.actions);
  w_f64s(out, d.rewards);
  w_f64s(out, d.next_states);
  w_f64s(out, d.dones);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("dataset: cannot open " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("dataset: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("dataset: rename failed for " + path);
}

Dataset dataset_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dataset: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  Reader r{buf};
  if (r.bytes(4) != std::string(kMagic, 4))
    throw std::runtime_error("dataset: bad magic in " + path);
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("dataset: unsupported version " +
                             std::to_string(version));
  Dataset d;
  d.state_dim = r.u32();
  d.action_dim = r.u32();
  d.gamma = r.f64();
  const std::uint64_t count = r.u64();
  const std::uint32_t idlen = r.u32();
  d.env_id = r.bytes(idlen);
  if (d.state_dim == 0 || d.action_dim == 0)
    throw std::runtime_error("dataset: zero dimension in header");
  r.f64s(d.states, count * d.state_dim);
  r.f64s(d.actions, count * d.action_dim);
  r.f64s(d.rewards, count);
  r.f64s(d.next_states, count * d.state_dim);
  r.f64s(d.dones, count);
  if (r.pos != buf.size())
    throw std::runtime_error("dataset: trailing bytes in " + path);
  for (double v : d.dones)
    if (v != 0.0 && v != 1.0)
      throw std::runtime_error("dataset: malformed done flag");
  return d;
}

}  // namespace steer
