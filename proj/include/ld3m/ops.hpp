// SPDX-License-Identifier: Apache-2.0
#pragma once

// Differentiable primitives. All backward rules are expressed with these same
// ops, so every primitive is differentiable to any order.

#include <cstddef>
#include <span>
#include <vector>

#include "ld3m/autodiff.hpp"

namespace ld3m::ad {

Var constant(Array a);
Var zeros(const Shape& shape);

// Elementwise, operand shapes must match exactly.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double k);
Var add_scalar(const Var& a, double k);
Var neg(const Var& a);

Var relu(const Var& x);
Var tanh(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var sqrt(const Var& x);
Var square(const Var& x);

enum class Elementwise { relu, tanh, add, mul, scale };
Var elementwise(Elementwise kind, std::span<const Var> args, double k = 1.0);

// x[B x n] or x[n]; W[m x n]; b[m]. Returns [B x m] or [m].
Var affine(const Var& x, const Var& W, const Var& b);
Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);

// Broadcasting helpers over rank-2 X[B x m].
Var add_rowvec(const Var& X, const Var& v);       // v[m]
Var broadcast_rows(const Var& v, std::size_t rows);  // v[m] -> [rows x m]
Var broadcast_cols(const Var& v, std::size_t cols);  // v[B] -> [B x cols]
Var broadcast_scalar(const Var& s, const Shape& shape);
Var sum_rows(const Var& X);  // -> [m]
Var row_sum(const Var& X);   // -> [B]

Var sum(const Var& x);  // -> scalar
Var mean(const Var& x);
Var dot(const Var& a, const Var& b);  // sum(a*b), any matching shapes

Var log_softmax_rows(const Var& X);

// Shape manipulation.
Var reshape(const Var& x, const Shape& shape);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& X, std::size_t start, std::size_t len);
Var pad_cols(const Var& X, std::size_t start, std::size_t total);
Var concat_flat(std::span<const Var> parts);  // flatten each and join -> [sum n_i]
Var slice_flat(const Var& x, std::size_t start, std::size_t len);
Var pad_flat(const Var& x, std::size_t start, std::size_t total);
Var take_rows(const Var& X, std::span<const std::size_t> idx);
Var scatter_rows(const Var& X, std::span<const std::size_t> idx, std::size_t rows);
Var take_cols(const Var& X, std::span<const std::size_t> idx);
Var scatter_cols(const Var& X, std::span<const std::size_t> idx, std::size_t cols);

// Losses.
Var mse(const Var& a, const Var& b);
Var cross_entropy(const Var& logits, std::span<const int> labels);
Var cross_entropy_soft(const Var& logits, const Var& target_probs);
Var cosine_distance(const Var& a, const Var& b);  // 1 - <a,b>/(|a||b|)

enum class LossKind { mse, cross_entropy, cosine_distance };
// cross_entropy takes b as one-hot or probability targets.
Var reduce_loss(LossKind kind, const Var& a, const Var& b);

Array one_hot(std::span<const int> labels, std::size_t num_classes);

}  // namespace ld3m::ad
