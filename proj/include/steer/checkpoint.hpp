#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "steer/mlp.hpp"

namespace steer {

// Self-describing binary container for checkpoints: versioned header, named
// entries, little-endian 64-bit float parameter blocks. One format for
// policies, agents and optimizer state.
class Checkpoint {
 public:
  void put_f64(const std::string& key, double v);
  void put_i64(const std::string& key, std::int64_t v);
  void put_str(const std::string& key, std::string v);
  void put_f64s(const std::string& key, std::span<const double> v);
  void put_mlp(const std::string& key, const Mlp& net);

  bool has(const std::string& key) const;
  double f64(const std::string& key) const;
  std::int64_t i64(const std::string& key) const;
  const std::string& str(const std::string& key) const;
  const std::vector<double>& f64s(const std::string& key) const;
  Mlp mlp(const std::string& key) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  struct MlpBlob {
    MlpConfig cfg;
    std::vector<double> params;
  };
  std::map<std::string, double> f64_;
  std::map<std::string, std::int64_t> i64_;
  std::map<std::string, std::string> str_;
  std::map<std::string, std::vector<double>> f64s_;
  std::map<std::string, MlpBlob> mlp_;
};

}  // namespace steer
