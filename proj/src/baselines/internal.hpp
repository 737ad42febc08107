#pragma once

#include <vector>

#include "fewshot/ndcore/tape.hpp"
#include "fewshot/rng.hpp"

namespace fewshot::base::detail {

// Binds every parameter as a constant (no gradient tracking).
nd::BoundParams bind_constants(nd::Tape& tape, const nd::ParamSet& params);

// Rows `idx` of a tensor whose first axis is the batch axis.
nd::Tensor gather_rows(const nd::Tensor& x, const std::vector<std::size_t>& idx);

// Index minibatches without replacement within an epoch; batches never
// straddle epochs. A batch larger than n is clipped to n.
class MiniBatcher {
 public:
  MiniBatcher(std::size_t n, std::size_t batch, RngStream rng);
  std::vector<std::size_t> next();

 private:
  std::size_t n_, batch_;
  RngStream rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

nd::Tensor softmax_of(const nd::Tensor& logits);

}  // namespace fewshot::base::detail
