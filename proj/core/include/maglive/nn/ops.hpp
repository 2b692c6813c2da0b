#pragma once

#include "maglive/nn/tensor.hpp"

#include <span>
#include <vector>

namespace maglive::nn {

// All layer ops take a leading batch dimension N. Convolutions are valid
// (no padding), stride 1, cross-correlation. Channels are the last axis.

// x (N, L, Cin), kernels (K, Cin, Cout), bias (Cout) -> (N, L-K+1, Cout)
Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias);

// x (N, H, W, Cin), kernels (KH, KW, Cin, Cout), bias (Cout) -> (N, H-KH+1, W-KW+1, Cout)
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias);

enum class PoolKind { max, avg };

// Non-overlapping windows; trailing remainder dropped.
Tensor pool1d(const Tensor& x, PoolKind kind, std::size_t window);  // (N, L, C) -> (N, L/w, C)
Tensor pool2d(const Tensor& x, PoolKind kind, std::size_t window);  // (N, H, W, C) -> (N, H/w, W/w, C)

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Per-channel normalization over every axis but the last. In training mode the
// batch statistics are used and the running statistics are updated in place
// (unbiased variance, momentum 0.1); otherwise the running statistics are used.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                 Tensor& running_var, bool training);

// x (N, in), weights (in, out), bias (out) -> (N, out)
Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Shape change without copying semantics; element count must match.
Tensor reshape(const Tensor& x, Shape shape);
// (N, ...) -> (N, prod(...))
Tensor flatten(const Tensor& x);

// (N, A), (N, B) -> (N, A + B)
Tensor concat_features(const Tensor& a, const Tensor& b);
// (N, D) -> (N, 1)
Tensor mean_features(const Tensor& x);
// (N, D) * (N, 1) -> (N, D)
Tensor scale_rows(const Tensor& x, const Tensor& scale);
// (N, D) -> column `index` as (N, 1)
Tensor select_column(const Tensor& x, std::size_t index);

// Row-wise L2 normalization. A row whose norm is exactly zero maps to the
// first basis vector (no gradient) and is reported through `degenerate_rows`.
Tensor l2_normalize_rows(const Tensor& x, std::vector<std::size_t>* degenerate_rows = nullptr);

// Scalar reductions used by losses and tests.
Tensor sum(const Tensor& x);
Tensor sum_squares(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);  // same shape
Tensor mul_scalar(const Tensor& x, double s);

}  // namespace maglive::nn
