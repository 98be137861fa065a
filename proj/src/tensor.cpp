#include "steer/tensor.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace steer {

namespace {

using MatMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                   Eigen::Dynamic,
                                                   Eigen::RowMajor>>;

void require_rank2(const Tensor& t, const char* what) {
  if (t.shape.size() != 2)
    throw std::invalid_argument(std::string(what) + ": tensor is not rank-2");
  if (t.data.size() != t.shape[0] * t.shape[1])
    throw std::invalid_argument(std::string(what) +
                                ": data length does not match shape");
}

}  // namespace

std::size_t Tensor::rows() const {
  if (shape.size() != 2) throw std::invalid_argument("Tensor::rows: not rank-2");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (shape.size() != 2) throw std::invalid_argument("Tensor::cols: not rank-2");
  return shape[1];
}

void Tensor::resize(std::size_t r, std::size_t c) {
  shape = {r, c};
  data.resize(r * c);
}

bool Tensor::finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
  require_rank2(a, "matmul lhs");
  require_rank2(b, "matmul rhs");
  if (a.shape[1] != b.shape[0])
    throw std::invalid_argument("matmul: inner dimensions differ");
  out.resize(a.shape[0], b.shape[1]);
  ConstMatMap ma(a.data.data(), a.shape[0], a.shape[1]);
  ConstMatMap mb(b.data.data(), b.shape[0], b.shape[1]);
  MatMap mo(out.data.data(), out.shape[0], out.shape[1]);
  mo.noalias() = ma * mb;
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out) {
  require_rank2(a, "matmul_nt lhs");
  require_rank2(b, "matmul_nt rhs");
  if (a.shape[1] != b.shape[1])
    throw std::invalid_argument("matmul_nt: inner dimensions differ");
  out.resize(a.shape[0], b.shape[0]);
  ConstMatMap ma(a.data.data(), a.shape[0], a.shape[1]);
  ConstMatMap mb(b.data.data(), b.shape[0], b.shape[1]);
  MatMap mo(out.data.data(), out.shape[0], out.shape[1]);
  mo.noalias() = ma * mb.transpose();
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out) {
  require_rank2(a, "matmul_tn lhs");
  require_rank2(b, "matmul_tn rhs");
  if (a.shape[0] != b.shape[0])
    throw std::invalid_argument("matmul_tn: inner dimensions differ");
  out.resize(a.shape[1], b.shape[1]);
  ConstMatMap ma(a.data.data(), a.shape[0], a.shape[1]);
  ConstMatMap mb(b.data.data(), b.shape[0], b.shape[1]);
  MatMap mo(out.data.data(), out.shape[0], out.shape[1]);
  mo.noalias() = ma.transpose() * mb;
}

}  // namespace steer
