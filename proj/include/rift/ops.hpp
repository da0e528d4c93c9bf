#pragma once

#include <span>
#include <vector>

#include "rift/autograd.hpp"

// Differentiable tensor operations. Every op validates shapes, computes the
// forward value eagerly and registers its vector-Jacobian product.
namespace rift::ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);

Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var tanh(const Var& x);

// x: [N,Cin,H,W], weight: [Cout,Cin,k,k], bias: [Cout] or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
// x: [N,Cin,H,W], weight: [Cin,Cout,k,k]; output side (H-1)*stride - 2*pad + k.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);

Var upsample_nearest2x(const Var& x);
Var avg_pool2x(const Var& x);
// Per-sample, per-channel normalization over H,W.
Var instance_norm(const Var& x, double eps);

// Affine map over the last axis: x [..., Din], weight [Dout, Din], bias [Dout].
Var linear(const Var& x, const Var& weight, const Var& bias);
// Columns [begin, begin+count) of the last axis.
Var slice_last(const Var& x, int begin, int count);

// [N,C,H,W] -> [N,C]
Var spatial_mean(const Var& x);
// [N,K,H,W] -> [N,1,H,W], picking channel index[n] for sample n.
Var select_channel(const Var& x, std::span<const int> index);

Var mean(const Var& x);
// mean |a - b| over all elements.
Var mean_abs_diff(const Var& a, const Var& b);
// sum(weights * |a - b|) / numel; weights is a constant of the same shape.
Var weighted_abs_diff(const Var& a, const Var& b, const Tensor& weights);
// mean log(1 + exp(sign * x)), evaluated stably.
Var mean_softplus(const Var& x, double sign);
// logits [N,K]; mean over N of -log softmax(logits)[label].
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);

}  // namespace rift::ops
