#pragma once

#include <span>
#include <vector>

#include "gl/tensor.hpp"

namespace gl {

// Primitive op set. Each op works on detached tensors (plain arithmetic)
// or recorded ones (emitting tape nodes); mixing is allowed and promotes
// the detached side to constants on the recording tape. Shape errors name
// the offending shapes.
//
// softmax_cross_entropy is built from exp/log/max primitives using the
// shifted log-sum-exp identity with the row max captured as a constant;
// the identity holds exactly for any constant shift, so its derivatives
// of every order are exact.

Tensor matmul(const Tensor& a, const Tensor& b);
// Elementwise; also accepts a [1 x N] or [N] second operand against a
// [R x N] first operand (bias-style row broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sum(const Tensor& a);         // -> scalar
Tensor mean(const Tensor& a);        // -> scalar
Tensor l2_norm_sq(const Tensor& a);  // -> scalar
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Row-wise softmax probabilities of a detached logits matrix.
std::vector<double> softmax_probs(const Tensor& logits);

}  // namespace gl
