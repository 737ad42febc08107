#include "fewshot/ndcore/tape.hpp"

#include "fewshot/error.hpp"

namespace fewshot::nd {

const Tensor& Var::value() const {
  if (!tape_) throw Error("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this) throw Error("Var belongs to a different tape");
}

namespace {

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite values in ") + what);
}

}  // namespace

Var Tape::constant(Tensor value) {
  require_finite(value, "constant");
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  require_finite(value, "variable");
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(const std::string& path, Tensor value) {
  require_finite(value, path.c_str());
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.param_path = path;
  return push(std::move(n));
}

BoundParams Tape::bind(const ParamSet& params) {
  BoundParams bound;
  for (const auto& [path, value] : params) bound.emplace(path, param(path, value));
  return bound;
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward, const char* op) {
  require_finite(value, op);
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    check_owned(in);
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

GradMap Tape::backward(Var loss) {
  check_owned(loss);
  if (nodes_.empty()) throw Error("backward on an empty tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward requires a scalar loss, got " + shape_string(loss.shape()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    // Closures only write to operand buffers, which precede node i.
    n.backward(*this, n.grad);
  }
  GradMap grads;
  for (const auto& n : nodes_) {
    if (n.param_path.empty()) continue;
    grads[n.param_path] = n.has_grad ? n.grad : Tensor::zeros(n.value.shape());
  }
  return grads;
}

Tensor Tape::grad(Var v) const {
  check_owned(v);
  const Node& n = nodes_.at(v.id());
  return n.has_grad ? n.grad : Tensor::zeros(n.value.shape());
}

}  // namespace fewshot::nd
