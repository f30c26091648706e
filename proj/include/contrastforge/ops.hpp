// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "contrastforge/tensor.hpp"

// Differentiable primitives. Every op takes the tape it records onto; an op
// whose inputs do not require gradients records nothing.
//
// Kink conventions for the backward pass: relu'(0) = 0, leaky_relu'(0) = slope,
// |x|'(0) = 0.

namespace contrastforge::ops {

inline constexpr double kInstanceNormEps = 1e-5;

/// Cross-correlation. input [N,Cin,H,W], kernel [Cout,Cin,kH,kW], bias [Cout] or undefined.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int padding);

/// Adjoint of conv2d for the same kernel. input [N,Cin,H,W], kernel [Cin,Cout,kH,kW];
/// output spatial size (H-1)*stride - 2*padding + kH.
Tensor conv_transpose2d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        int stride, int padding);

/// Per-sample, per-channel standardization over the spatial plane, no affine.
Tensor instance_norm(Tape& tape, const Tensor& input, double eps = kInstanceNormEps);

Tensor leaky_relu(Tape& tape, const Tensor& x, double slope);
Tensor relu(Tape& tape, const Tensor& x);
Tensor tanh(Tape& tape, const Tensor& x);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double factor);
Tensor add_scalar(Tape& tape, const Tensor& x, double offset);

Tensor abs(Tape& tape, const Tensor& x);
Tensor square(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);
Tensor sum(Tape& tape, const Tensor& x);

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis);

/// Zero padding; pads[i] = (before, after) for axis i. Missing trailing axes
/// are left unpadded.
Tensor pad_zero(Tape& tape, const Tensor& x, const std::vector<std::pair<std::size_t, std::size_t>>& pads);

/// Elementwise -[t log s(l) + (1-t) log(1-s(l))] in the overflow-free form
/// max(l,0) - l t + log(1 + exp(-|l|)). Labels carry no gradient.
Tensor bce_with_logits(Tape& tape, const Tensor& logits, const Tensor& labels);
Tensor bce_with_logits(Tape& tape, const Tensor& logits, double label);

}  // namespace contrastforge::ops
