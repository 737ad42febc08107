#pragma once

// Central finite-difference oracle for tape gradients. Test-only; shares no
// code with the reverse rules it checks beyond forward evaluation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fewshot/ndcore/ops.hpp"
#include "fewshot/rng.hpp"

namespace fewshot::testkit {

using ScalarFn = std::function<nd::Var(nd::Tape&, const std::vector<nd::Var>&)>;

inline double forward_value(const ScalarFn& f, const std::vector<nd::Tensor>& inputs) {
  nd::Tape tape;
  std::vector<nd::Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return f(tape, vars).value().item();
}

// max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf), per input,
// reduced by max.
inline double gradient_error(const ScalarFn& f, const std::vector<nd::Tensor>& inputs, double h = 1e-5) {
  nd::Tape tape;
  std::vector<nd::Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  nd::Var loss = f(tape, vars);
  tape.backward(loss);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const nd::Tensor analytic = tape.grad(vars[k]);
    double diff = 0.0, scale = 1e-8;
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      std::vector<nd::Tensor> plus = inputs, minus = inputs;
      plus[k][i] += h;
      minus[k][i] -= h;
      const double numeric = (forward_value(f, plus) - forward_value(f, minus)) / (2.0 * h);
      diff = std::max(diff, std::abs(analytic[i] - numeric));
      scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric)});
    }
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

inline nd::Tensor random_tensor(nd::Shape shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  nd::Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Reduces a tensor-valued op to a scalar through a fixed random projection.
inline nd::Var project(nd::Var out, RngStream& rng) {
  nd::Tensor weights = random_tensor(out.shape(), rng);
  return nd::mean(nd::mul(out, out.tape()->constant(std::move(weights))));
}

struct PrimitiveCase {
  std::string name;
  // Builds a random instance: returns inputs and the scalar function.
  std::function<std::pair<std::vector<nd::Tensor>, ScalarFn>(RngStream&)> make;
};

std::vector<PrimitiveCase> primitive_cases();

}  // namespace fewshot::testkit
