#pragma once

#include <cstddef>
#include <string>

#include "fewshot/ndcore/ops.hpp"
#include "fewshot/ndcore/params.hpp"
#include "fewshot/rng.hpp"

namespace fewshot::nd {

// Desk-scale "conv-4" network: `blocks` x [conv3x3 -> relu -> maxpool2x2]
// -> global average pool, optionally followed by a linear head.
struct BackboneSpec {
  std::string arch = "conv4";
  std::size_t input_side = 32;
  std::size_t channels = 3;
  std::size_t width = 64;  // embedding width
  std::size_t blocks = 4;
  std::size_t head_width = 0;  // 0: no head

  void validate() const;
  bool operator==(const BackboneSpec&) const = default;
};

inline constexpr const char* kHeadPrefix = "head.";

// Kaiming-uniform fan-in weights (bound sqrt(6 / fan_in)), zero biases.
ParamSet init_params(const BackboneSpec& spec, RngStream& rng);
// Parameters for "head.weight" [in, out] and "head.bias" [out].
ParamSet init_head(std::size_t in, std::size_t out, RngStream& rng);
ParamSet zero_head(std::size_t in, std::size_t out);

// images: [B, channels, side, side] -> [B, width]
Var embed(const BoundParams& params, Var images, const BackboneSpec& spec);
// embedding: [B, in] -> [B, out]
Var head_logits(const BoundParams& params, Var embedding);

}  // namespace fewshot::nd
