#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fewshot/ndcore/params.hpp"
#include "fewshot/ndcore/tensor.hpp"

namespace fewshot::nd {

class Tape;

// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using BoundParams = std::map<std::string, Var>;

// Append-only record of operations for reverse-mode differentiation.
//
// Nodes are stored in insertion order, so operands always precede their
// results and the backward pass is a single reverse sweep. A Tape is bound
// to one thread of execution.
class Tape {
 public:
  // Accumulates the node's incoming gradient into its operands.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  Var param(const std::string& path, Tensor value);
  BoundParams bind(const ParamSet& params);

  // Used by operation implementations.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward, const char* op);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id()); }
  // Gradient buffer of an operand, zero-initialized on first use.
  Tensor& grad_buffer(std::size_t id);

  // Reverse sweep from a scalar loss. Returns gradients for every parameter
  // leaf on the tape; parameters the loss does not reach map to zeros.
  GradMap backward(Var loss);
  // Gradient of any node after backward(); zeros when unreachable.
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::string param_path;
    BackwardFn backward;
  };

  Var push(Node node);
  void check_owned(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace fewshot::nd
