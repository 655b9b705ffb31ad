#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "adaptlab/tensor.hpp"

// Differentiable operations. Unless stated otherwise inputs are rank-2.
namespace adaptlab::ops {

Tensor matmul(const Tensor& a, const Tensor& b);      // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);   // [m,k] x [n,k]^T
Tensor add(const Tensor& a, const Tensor& b);         // same shape
Tensor add_row(const Tensor& a, const Tensor& bias);  // bias broadcast over rows
Tensor mul(const Tensor& a, const Tensor& b);         // elementwise
Tensor scale(const Tensor& a, double factor);
Tensor gelu(const Tensor& a);  // exact erf form

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Row-wise layer normalization with learned gain and bias of shape [1, cols].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Row-wise softmax. `additive_mask`, when non-empty, has one entry per
/// element and is added to the logits first (use -inf-like values to mask).
Tensor softmax_rows(const Tensor& x, std::span<const double> additive_mask = {});

/// out[i] = table[indices[i]].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);

/// Repeats each row `times` times and keeps the first `out_rows` rows.
Tensor repeat_rows(const Tensor& x, std::size_t times, std::size_t out_rows);

/// im2col for 1-D convolution over rows: output row j is the concatenation of
/// input rows [j*stride - pad_left, j*stride - pad_left + kernel), zero
/// outside the input.
Tensor unfold_rows(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad_left,
                   std::size_t pad_right);

/// Mean of row-wise softmax cross entropy against integer targets.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// sum(x * weights) for a constant weight tensor of identical shape.
Tensor weighted_sum(const Tensor& x, const Tensor& weights);

/// Elementwise mean of equally-shaped tensors.
Tensor average(std::span<const Tensor> parts);

/// Inverted dropout; identity when rate == 0 or when grad mode is off.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

}  // namespace adaptlab::ops
