#pragma once

#include <cstdint>

#include "styleforge/ad/tensor.hpp"

namespace styleforge::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

AdamState make_adam_state(const ParameterSet& params);

// Bias-corrected Adam. Parameters with trainable=false are not touched.
void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state, const AdamConfig& config);

}  // namespace styleforge::ad
