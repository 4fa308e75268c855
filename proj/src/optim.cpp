#include "molgen/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace molgen {

void AdamW::step(const std::vector<ParamRef>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const ParamRef& p : params) {
    Slot& slot = state_[p.name];
    if (slot.m.numel() == 0) {
      slot.m = Tensor::zeros(p.value->shape);
      slot.v = Tensor::zeros(p.value->shape);
    }
    if (!slot.m.same_shape(*p.value))
      throw std::runtime_error("adamw: shape changed for " + p.name);
    if (!p.grad->same_shape(*p.value))
      throw std::runtime_error("adamw: grad shape mismatch for " + p.name);
    const size_t n = p.value->data.size();
    for (size_t i = 0; i < n; ++i) {
      const double g = p.grad->data[i];
      const double m = cfg_.beta1 * slot.m.data[i] + (1.0 - cfg_.beta1) * g;
      const double v = cfg_.beta2 * slot.v.data[i] + (1.0 - cfg_.beta2) * g * g;
      slot.m.data[i] = m;
      slot.v.data[i] = v;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      const double old = p.value->data[i];
      p.value->data[i] = old - cfg_.lr * cfg_.weight_decay * old -
                         cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.value->require_finite("adamw update of " + p.name);
  }
}

void EmaShadow::init(const std::vector<ParamRef>& params) {
  shadow_.clear();
  for (const ParamRef& p : params) shadow_[p.name] = *p.value;
}

void EmaShadow::update(const std::vector<ParamRef>& params) {
  for (const ParamRef& p : params) {
    auto it = shadow_.find(p.name);
    if (it == shadow_.end()) throw std::runtime_error("ema: unknown " + p.name);
    Tensor& s = it->second;
    const size_t n = s.data.size();
    for (size_t i = 0; i < n; ++i)
      s.data[i] = decay_ * s.data[i] + (1.0 - decay_) * p.value->data[i];
  }
}

void EmaShadow::apply_to(const std::vector<ParamRef>& params) const {
  for (const ParamRef& p : params) {
    auto it = shadow_.find(p.name);
    if (it == shadow_.end()) throw std::runtime_error("ema: unknown " + p.name);
    *p.value = it->second;
  }
}

}  // namespace molgen
