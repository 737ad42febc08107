#pragma once

#include <optional>
#include <span>

#include "fewshot/ndcore/tape.hpp"

// Differentiable primitives. Every function validates operand shapes, throws
// ShapeError naming the offending shapes, and rejects non-finite results with
// NumericError.
namespace fewshot::nd {

// Same shape, or `b` a vector broadcast over the rows of `a`
// (b.size() == a.shape().back()).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double factor);
Var mul(Var a, Var b);  // elementwise, same shape

Var matmul(Var a, Var b);  // [m,k] x [k,n] -> [m,n]

// Stride-1 convolution with symmetric zero padding.
// x: [B,C,H,W], weight: [F,C,K,K], bias: [F] -> [B,F,H+2p-K+1,W+2p-K+1]
Var conv2d(Var x, Var weight, std::optional<Var> bias, std::size_t padding);

Var relu(Var a);
Var max_pool2x2(Var x);      // [B,C,H,W] -> [B,C,H/2,W/2], ties go to the first element
Var global_avg_pool(Var x);  // [B,C,H,W] -> [B,C]
Var flatten(Var x);          // [B,...] -> [B, prod(...)]

Var softmax_rows(Var a);
Var l2_normalize_rows(Var a);  // zero-norm rows -> NumericError
Var pairwise_sq_euclidean(Var a, Var b);  // [m,d],[n,d] -> [m,n]
Var pairwise_cosine(Var a, Var b);        // [m,d],[n,d] -> [m,n]

// Mean over rows of -log softmax(logits)[label].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);
Var mean(Var a);  // -> shape [1]

}  // namespace fewshot::nd
