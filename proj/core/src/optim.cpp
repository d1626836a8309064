#include "catnet/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace catnet {

void AdamOptimizer::step(std::span<Parameter* const> params) {
  if (slots_.empty()) {
    slots_.reserve(params.size());
    for (const Parameter* p : params) {
      slots_.push_back({Tensor::zeros(p->value.shape()), Tensor::zeros(p->value.shape())});
    }
  }
  if (slots_.size() != params.size()) {
    throw std::invalid_argument("AdamOptimizer: parameter list size changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (!p.grad.all_finite()) {
      throw std::runtime_error("AdamOptimizer: non-finite gradient in parameter '" + p.name + "'");
    }
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable) continue;
    Slot& s = slots_[i];
    for (std::size_t k = 0; k < p.value.numel(); ++k) {
      const double g = p.grad[k];
      s.m[k] = cfg_.beta1 * s.m[k] + (1.0 - cfg_.beta1) * g;
      s.v[k] = cfg_.beta2 * s.v[k] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = s.m[k] / bc1;
      const double v_hat = s.v[k] / bc2;
      p.value[k] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
    }
  }
}

void AdamOptimizer::zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace catnet
