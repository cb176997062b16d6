#include "symcons/tensor.hpp"

#include <sstream>

#include "symcons/errors.hpp"

namespace symcons {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, double fill, bool needs_grad)
    : shape(std::move(s)), values(shape_size(shape), fill) {
  set_requires_grad(needs_grad);
}

Tensor::Tensor(Shape s, std::vector<double> data, bool needs_grad)
    : shape(std::move(s)), values(std::move(data)) {
  if (values.size() != shape_size(shape)) {
    throw ContractError("tensor data length " + std::to_string(values.size()) +
                        " does not match shape " + shape_string(shape));
  }
  set_requires_grad(needs_grad);
}

double Tensor::item() const {
  if (values.size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape));
  return values[0];
}

void Tensor::set_requires_grad(bool on) {
  requires_grad = on;
  if (on) {
    grad.assign(values.size(), 0.0);
  } else {
    grad.clear();
  }
}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

namespace kernels {

void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict crow = c.data() + i * n;
    const double* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* __restrict brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  matmul_nn(a, bt, c, m, k, n);
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * k;
    const double* __restrict brow = b.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* __restrict crow = c.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace kernels

}  // namespace symcons
