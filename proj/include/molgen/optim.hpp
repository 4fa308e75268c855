#pragma once

#include <map>
#include <string>
#include <vector>

#include "molgen/layers.hpp"
#include "molgen/tensor.hpp"

namespace molgen {

struct AdamWConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

// AdamW with decoupled weight decay:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   p <- p - lr*wd*p - lr*mhat/(sqrt(vhat) + eps)
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<ParamRef>& params);

  int64_t steps() const { return t_; }
  AdamWConfig& config() { return cfg_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  struct Slot {
    Tensor m, v;
  };
  AdamWConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, Slot> state_;
};

// Exponential moving average of parameters: shadow <- d*shadow + (1-d)*live.
class EmaShadow {
 public:
  explicit EmaShadow(double decay = 0.999) : decay_(decay) {}

  void init(const std::vector<ParamRef>& params);
  void update(const std::vector<ParamRef>& params);
  void apply_to(const std::vector<ParamRef>& params) const;

  bool empty() const { return shadow_.empty(); }
  double decay() const { return decay_; }
  const std::map<std::string, Tensor>& tensors() const { return shadow_; }
  std::map<std::string, Tensor>& tensors() { return shadow_; }

 private:
  double decay_;
  std::map<std::string, Tensor> shadow_;
};

}  // namespace molgen
