#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "molgen/rng.hpp"

namespace molgen {

// Dense 64-bit float tensor. Shape is a dimension list; data is flat with the
// last dimension fastest.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 0) throw std::invalid_argument("negative tensor dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int64_t> s, double value) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = value;
    return t;
  }

  static Tensor randn(std::vector<int64_t> s, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = stddev * rng.normal();
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  Tensor reshaped(std::vector<int64_t> s) const {
    if (numel_of(s) != numel())
      throw std::invalid_argument("reshape changes element count");
    Tensor t;
    t.shape = std::move(s);
    t.data = data;
    return t;
  }

  bool all_finite() const;

  // Throws std::runtime_error naming `what` when a NaN/Inf is present.
  void require_finite(const std::string& what) const;
};

// Elementwise helpers used across the training code.
void axpy(double alpha, const Tensor& x, Tensor& y);   // y += alpha * x
double dot(const Tensor& a, const Tensor& b);
double mse(const Tensor& a, const Tensor& b);
Tensor mse_grad(const Tensor& a, const Tensor& b);     // d mean((a-b)^2) / da

}  // namespace molgen
