#include "molgen/tensor.hpp"

#include <cmath>

namespace molgen {

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::require_finite(const std::string& what) const {
  if (!all_finite())
    throw std::runtime_error(what + ": non-finite value encountered");
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  if (!x.same_shape(y)) throw std::invalid_argument("axpy: shape mismatch");
  const size_t n = x.data.size();
  for (size_t i = 0; i < n; ++i) y.data[i] += alpha * x.data[i];
}

double dot(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("dot: shape mismatch");
  double s = 0.0;
  const size_t n = a.data.size();
  for (size_t i = 0; i < n; ++i) s += a.data[i] * b.data[i];
  return s;
}

double mse(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mse: shape mismatch");
  double s = 0.0;
  const size_t n = a.data.size();
  for (size_t i = 0; i < n; ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(n);
}

Tensor mse_grad(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mse_grad: shape mismatch");
  Tensor g(a.shape);
  const double scale = 2.0 / static_cast<double>(a.numel());
  const size_t n = a.data.size();
  for (size_t i = 0; i < n; ++i) g.data[i] = scale * (a.data[i] - b.data[i]);
  return g;
}

}  // namespace molgen
