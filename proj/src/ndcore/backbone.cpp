#include "fewshot/ndcore/backbone.hpp"

#include <cmath>

#include "fewshot/error.hpp"

namespace fewshot::nd {

namespace {

std::string block_prefix(std::size_t i) { return "backbone.conv" + std::to_string(i + 1) + "."; }

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, RngStream& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

void BackboneSpec::validate() const {
  if (arch != "conv4") throw ConfigError("unknown backbone architecture '" + arch + "'");
  if (channels == 0 || width == 0 || blocks == 0) throw ConfigError("backbone extents must be positive");
  if ((input_side >> blocks) == 0) {
    throw ConfigError("input side " + std::to_string(input_side) + " too small for " + std::to_string(blocks) +
                      " pooling blocks");
  }
}

ParamSet init_params(const BackboneSpec& spec, RngStream& rng) {
  spec.validate();
  ParamSet params;
  std::size_t in = spec.channels;
  for (std::size_t i = 0; i < spec.blocks; ++i) {
    const std::string prefix = block_prefix(i);
    RngStream layer_rng = rng.child(prefix + "weight");
    params.insert(prefix + "weight", kaiming_uniform({spec.width, in, 3, 3}, in * 9, layer_rng));
    params.insert(prefix + "bias", Tensor::zeros({spec.width}));
    in = spec.width;
  }
  if (spec.head_width > 0) params.merge(init_head(spec.width, spec.head_width, rng));
  return params;
}

ParamSet init_head(std::size_t in, std::size_t out, RngStream& rng) {
  RngStream head_rng = rng.child("head.weight");
  ParamSet params;
  params.insert("head.weight", kaiming_uniform({in, out}, in, head_rng));
  params.insert("head.bias", Tensor::zeros({out}));
  return params;
}

ParamSet zero_head(std::size_t in, std::size_t out) {
  ParamSet params;
  params.insert("head.weight", Tensor::zeros({in, out}));
  params.insert("head.bias", Tensor::zeros({out}));
  return params;
}

Var embed(const BoundParams& params, Var images, const BackboneSpec& spec) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != spec.channels || s[2] != spec.input_side || s[3] != spec.input_side) {
    throw ShapeError("backbone expects [B," + std::to_string(spec.channels) + "," +
                     std::to_string(spec.input_side) + "," + std::to_string(spec.input_side) + "], got " +
                     shape_string(s));
  }
  Var h = images;
  for (std::size_t i = 0; i < spec.blocks; ++i) {
    const std::string prefix = block_prefix(i);
    h = conv2d(h, params.at(prefix + "weight"), params.at(prefix + "bias"), 1);
    h = max_pool2x2(relu(h));
  }
  return global_avg_pool(h);
}

Var head_logits(const BoundParams& params, Var embedding) {
  return add(matmul(embedding, params.at("head.weight")), params.at("head.bias"));
}

}  // namespace fewshot::nd
