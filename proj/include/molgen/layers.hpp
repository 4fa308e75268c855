#pragma once

#include <memory>
#include <string>
#include <vector>

#include "molgen/rng.hpp"
#include "molgen/tensor.hpp"

namespace molgen {

// Named view of a learnable parameter and its gradient accumulator.
struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

// Everything a layer needs to run its backward pass. `children` is used by
// container layers, `extra` by leaf layers (saved activations, masks, ...).
struct LayerCache {
  Tensor input;
  std::vector<Tensor> extra;
  std::vector<LayerCache> children;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual const char* kind() const = 0;

  // Returns the output and fills `cache` with whatever backward() needs.
  virtual Tensor forward(const Tensor& in, LayerCache& cache, bool training) = 0;

  // Accumulates parameter gradients internally and returns d loss / d input.
  virtual Tensor backward(const LayerCache& cache, const Tensor& grad_out) = 0;

  virtual void collect(const std::string& prefix, std::vector<ParamRef>& out) {
    (void)prefix;
    (void)out;
  }
  virtual void zero_grad() {}
};

// --------------------------------------------------------------------------
// leaf layers
// --------------------------------------------------------------------------

// 3-d convolution over [C_in, D, H, W] -> [C_out, OD, OH, OW] with
// O = (I + 2*pad - k) / stride + 1.
class Conv3d final : public Layer {
 public:
  Conv3d(int64_t cin, int64_t cout, int k, int stride, int pad, Rng& rng);

  const char* kind() const override { return "conv3d"; }
  Tensor forward(const Tensor& in, LayerCache& cache, bool training) override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  void zero_grad() override;

  Tensor weight;  // [cout, cin, k, k, k]
  Tensor bias;    // [cout]
  Tensor gweight, gbias;

 private:
  int64_t cin_, cout_;
  int k_, stride_, pad_;
};

// Transposed 3-d convolution, O = (I - 1) * stride - 2*pad + k.
class ConvTranspose3d final : public Layer {
 public:
  ConvTranspose3d(int64_t cin, int64_t cout, int k, int stride, int pad,
                  Rng& rng);

  const char* kind() const override { return "conv3d_transpose"; }
  Tensor forward(const Tensor& in, LayerCache& cache, bool training) override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  void zero_grad() override;

  Tensor weight;  // [cin, cout, k, k, k]
  Tensor bias;    // [cout]
  Tensor gweight, gbias;

 private:
  int64_t cin_, cout_;
  int k_, stride_, pad_;
};

// Group normalization over [C, spatial...]; statistics per group of channels.
class GroupNorm final : public Layer {
 public:
  GroupNorm(int64_t channels, int64_t groups, double eps = 1e-5);

  const char* kind() const override { return "groupnorm"; }
  Tensor forward(const Tensor& in, LayerCache& cache, bool training) override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  void zero_grad() override;

  Tensor gamma, beta;  // [C]
  Tensor ggamma, gbeta;

 private:
  int64_t channels_, groups_;
  double eps_;
};

// x * sigmoid(x)
class SiLU final : public Layer {
 public:
  const char* kind() const override { return "silu"; }
  Tensor forward(const Tensor& in, LayerCache& cache, bool training) override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out) override;
};

class Sigmoid final : public Layer {
 public:
  const char* kind() const override { return "sigmoid"; }
  Tensor forward(const Tensor& in, LayerCache& cache, bool training) override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out) override;
};

// Multi-head self-attention over spatial positions: [C, spatial...] is read
// as one C-dim token per voxel. Pure attention, no residual (see Residual).
class Attention final : public Layer {
 public:
  Attention(int64_t channels, int64_t heads, Rng& rng);

  const char* kind() const override { return "attention"; }
  Tensor forward(const Tensor& in, LayerCache& cache, bool training) override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  void zero_grad() override;

  Tensor wq, wk, wv, wo;  // [C, C]
  Tensor bq, bk, bv, bo;  // [C]
  Tensor gwq, gwk, gwv, gwo, gbq, gbk, gbv, gbo;

 private:
  int64_t channels_, heads_;
};

// y = W x + b applied along the first dimension: [cin, ...] -> [cout, ...].
class Linear final : public Layer {
 public:
  Linear(int64_t cin, int64_t cout, Rng& rng);

  const char* kind() const override { return "linear"; }
  Tensor forward(const Tensor& in, LayerCache& cache, bool training) override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  void zero_grad() override;

  Tensor weight;  // [cout, cin]
  Tensor bias;    // [cout]
  Tensor gweight, gbias;

 private:
  int64_t cin_, cout_;
};

// Inverted dropout; identity when not training or p == 0.
class Dropout final : public Layer {
 public:
  Dropout(double p, uint64_t seed);

  const char* kind() const override { return "dropout"; }
  Tensor forward(const Tensor& in, LayerCache& cache, bool training) override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out) override;

 private:
  double p_;
  Rng rng_;
};

// --------------------------------------------------------------------------
// containers
// --------------------------------------------------------------------------

class Sequential final : public Layer {
 public:
  const char* kind() const override { return "sequential"; }
  Sequential() = default;

  Layer* add(std::unique_ptr<Layer> layer) {
    layers_.push_back(std::move(layer));
    return layers_.back().get();
  }

  Tensor forward(const Tensor& in, LayerCache& cache, bool training) override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  void zero_grad() override;

  size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// y = x + inner(x)
class Residual final : public Layer {
 public:
  explicit Residual(std::unique_ptr<Layer> inner) : inner_(std::move(inner)) {}

  const char* kind() const override { return "residual"; }
  Tensor forward(const Tensor& in, LayerCache& cache, bool training) override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  void zero_grad() override;

 private:
  std::unique_ptr<Layer> inner_;
};

// --------------------------------------------------------------------------
// layout helpers for hand-written modules (skip connections etc.)
// --------------------------------------------------------------------------

// Stack two [C?, spatial] tensors along the channel dimension.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Inverse of concat_channels.
void split_channels(const Tensor& ab, int64_t ca, Tensor& a, Tensor& b);

}  // namespace molgen
