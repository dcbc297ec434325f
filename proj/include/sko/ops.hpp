#pragma once

// Differentiable free functions over Tensor<Scalar>. All shape checks throw
// DimensionError carrying the offending shapes.

#include "sko/tensor.hpp"

#include <cstdint>
#include <span>

namespace sko {

// ---- linear algebra

/// [..., m, k] x [..., k, p] -> [..., m, p]; leading axes broadcast.
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// Swaps the last two axes.
template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape);

/// [B, N, H*d] -> [B, H, N, d]
template <typename Scalar>
Tensor<Scalar> split_heads(const Tensor<Scalar>& x, Index heads);

/// [B, H, N, d] -> [B, N, H*d]
template <typename Scalar>
Tensor<Scalar> merge_heads(const Tensor<Scalar>& x);

// ---- elementwise (trailing-axis broadcasting)

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
/// Throws NumericError if any divisor is zero.
template <typename Scalar>
Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor);
template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& x, Scalar offset);

/// Gradient passes only where lo < x < hi (zero on and beyond the bounds).
template <typename Scalar>
Tensor<Scalar> clamp(const Tensor<Scalar>& x, Scalar lo, Scalar hi);

/// x[..., n, d] divided row-wise by m[n].
template <typename Scalar>
Tensor<Scalar> divide_rows(const Tensor<Scalar>& x, const Tensor<Scalar>& m);

/// tanh approximation of GELU.
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x);

// ---- row-wise normalisations over the last axis

/// row / max(|row|, eps)
template <typename Scalar>
Tensor<Scalar> l2_normalize_rows(const Tensor<Scalar>& x, Scalar eps = Scalar(1e-12));

/// x / sqrt(mean(x^2) + eps) * gain
template <typename Scalar>
Tensor<Scalar> rmsnorm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain, Scalar eps);

template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& x);

/// Keeps entries (i, j) of the last two axes with j <= i, writes `fill` elsewhere.
template <typename Scalar>
Tensor<Scalar> tril_mask(const Tensor<Scalar>& x, Scalar fill);

// ---- reductions and losses

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x);

/// Mean negative log-likelihood of `targets` under logits[..., V].
/// Throws std::out_of_range for targets outside [0, V).
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const std::int32_t> targets);

/// Rows of table[V, D] gathered by ids; result shape is index_shape + [D].
template <typename Scalar>
Tensor<Scalar> embedding(const Tensor<Scalar>& table, std::span<const std::int32_t> ids,
                         const Shape& index_shape);

// ---- operators

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return mul(a, b); }
template <typename Scalar>
Tensor<Scalar> operator/(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return div(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(Scalar s, const Tensor<Scalar>& x) { return scale(x, s); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& x) { return scale(x, Scalar(-1)); }

}  // namespace sko
