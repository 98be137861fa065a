#pragma once

#include <cstddef>
#include <vector>

namespace steer {

// Dense row-major float64 buffer. Everything downstream is rank-2 (batch ×
// features); rank-1 data travels as 1×D or plain std::vector.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0)
      : shape{r, c}, data(r * c, fill) {}

  std::size_t numel() const { return data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  void resize(std::size_t r, std::size_t c);

  double* row(std::size_t i) { return data.data() + i * cols(); }
  const double* row(std::size_t i) const { return data.data() + i * cols(); }
  double& operator()(std::size_t i, std::size_t j) {
    return data[i * shape[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data[i * shape[1] + j];
  }
  bool finite() const;
};

// out = a · b          (m×k, k×n -> m×n)
void matmul(const Tensor& a, const Tensor& b, Tensor& out);
// out = a · bᵀ         (m×k, n×k -> m×n)
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out);
// out = aᵀ · b         (k×m, k×n -> m×n)
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out);

}  // namespace steer
