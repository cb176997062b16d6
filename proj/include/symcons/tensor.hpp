#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace symcons {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float64 tensor. grad is allocated iff requires_grad.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0, bool needs_grad = false);
  Tensor(Shape s, std::vector<double> data, bool needs_grad = false);

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t last_dim() const { return shape.empty() ? 1 : shape.back(); }
  /// Number of last-dim slices.
  std::size_t rows() const { return last_dim() == 0 ? 0 : size() / last_dim(); }

  double item() const;
  void set_requires_grad(bool on);
  void zero_grad();
};

namespace kernels {

// All kernels accumulate into C (C += ...). Element C[i][j] is always summed in
// ascending order of the contraction index, independent of i, so identical rows
// of A give bit-identical rows of C.

/// C[m,n] += A[m,k] * B[k,n]
void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
/// C[m,n] += A[m,k] * B[n,k]^T
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
/// C[k,n] += A[m,k]^T * B[m,n]
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);

}  // namespace kernels

}  // namespace symcons
