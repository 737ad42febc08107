#include "fewshot/ndcore/optim.hpp"

#include <cmath>

#include "fewshot/error.hpp"

namespace fewshot::nd {

namespace {

const Tensor& grad_for(const GradMap& grads, const std::string& path, const Tensor& param) {
  auto it = grads.find(path);
  if (it == grads.end()) throw Error("no gradient for parameter " + path);
  if (it->second.shape() != param.shape()) {
    throw ShapeError("gradient for " + path + " has shape " + shape_string(it->second.shape()) +
                     ", parameter has " + shape_string(param.shape()));
  }
  return it->second;
}

}  // namespace

void adam_step(ParamSet& params, const GradMap& grads, AdamState& state) {
  for (const auto& [path, value] : params) grad_for(grads, path, value);

  const AdamConfig& c = state.config;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  for (const std::string& path : params.paths()) {
    Tensor& p = params.at(path);
    const Tensor& g = grads.at(path);
    auto [mit, m_new] = state.m.try_emplace(path, Tensor::zeros(p.shape()));
    auto [vit, v_new] = state.v.try_emplace(path, Tensor::zeros(p.shape()));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    if (m.shape() != p.shape()) throw ShapeError("Adam moment shape mismatch for " + path);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

void sgd_step(ParamSet& params, const GradMap& grads, double lr) {
  for (const std::string& path : params.paths()) {
    Tensor& p = params.at(path);
    const Tensor& g = grad_for(grads, path, p);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  }
}

}  // namespace fewshot::nd
