#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "catnet/autodiff.hpp"
#include "catnet/tensor.hpp"

namespace catnet {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. One shared step counter; per-parameter moment
/// tensors are allocated lazily on the first step. A NaN gradient aborts the
/// step with a diagnostic naming the parameter.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<Parameter* const> params);
  void zero_grad(std::span<Parameter* const> params);

  std::int64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Slot {
    Tensor m, v;
  };

  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace catnet
