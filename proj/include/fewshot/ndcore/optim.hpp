#pragma once

#include <cstdint>

#include "fewshot/ndcore/params.hpp"

namespace fewshot::nd {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment estimates for the parameters an optimizer has seen; moments are
// created lazily (zero) the first time a path is updated.
struct AdamState {
  AdamConfig config;
  GradMap m;
  GradMap v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : config(cfg) {}
};

// One bias-corrected Adam update of every entry of `params`, in path order.
// Each parameter needs a gradient of identical shape; extra gradients are
// ignored.
void adam_step(ParamSet& params, const GradMap& grads, AdamState& state);

// Plain gradient descent, used by inner adaptation loops.
void sgd_step(ParamSet& params, const GradMap& grads, double lr);

}  // namespace fewshot::nd
