#pragma once

// OpenMP-parallel compute kernels behind the autodiff ops. Convolutions use
// im2col + GEMM; the serial loop versions in reference.hpp are the oracles.

#include <cstddef>
#include <span>

namespace topogan::kernels {

// Geometry of a 2-d cross-correlation. For a transposed convolution this is
// the geometry of the forward convolution it is the adjoint of.
struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0, in_h = 0, in_w = 0;
  std::size_t out_channels = 0, out_h = 0, out_w = 0;
  std::size_t kernel = 0, stride = 1, pad = 0;

  // Validates k <= H + 2*pad and stride >= 1, then derives the output size.
  static ConvGeometry make(std::size_t batch, std::size_t in_channels, std::size_t in_h, std::size_t in_w,
                           std::size_t out_channels, std::size_t kernel, std::size_t stride, std::size_t pad);

  std::size_t in_size() const { return batch * in_channels * in_h * in_w; }
  std::size_t out_size() const { return batch * out_channels * out_h * out_w; }
  std::size_t weight_size() const { return out_channels * in_channels * kernel * kernel; }
  std::size_t patch_size() const { return in_channels * kernel * kernel; }
};

// y = conv(x, w) + b. `b` may be empty (no bias).
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<const T> b,
                    std::span<T> y);

// dx = conv^T(dy, w); also the forward pass of a transposed convolution.
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx);

// dw = dconv/dw^T dy (overwritten); db = per-channel sum of dy when non-empty.
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw,
                            std::span<T> db);

// y (n x out) = x (n x in) * w (in x out) + b.
template <typename T>
void dense_forward(std::size_t n, std::size_t in, std::size_t out, std::span<const T> x, std::span<const T> w,
                   std::span<const T> b, std::span<T> y);

// dx = dy * w^T (skipped when dx empty); dw = x^T * dy; db = column sums of dy.
template <typename T>
void dense_backward(std::size_t n, std::size_t in, std::size_t out, std::span<const T> x, std::span<const T> w,
                    std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db);

// Training-mode batch normalisation over N x H x W per channel. Writes the
// normalised activations to `xhat`, 1/sqrt(var+eps) to `invstd` and the batch
// mean / biased variance to `mean` / `var`.
template <typename T>
void batchnorm_forward_train(std::size_t n, std::size_t c, std::size_t hw, std::span<const T> x,
                             std::span<const T> gamma, std::span<const T> beta, T eps, std::span<T> y,
                             std::span<T> xhat, std::span<T> invstd, std::span<double> mean, std::span<double> var);

template <typename T>
void batchnorm_forward_eval(std::size_t n, std::size_t c, std::size_t hw, std::span<const T> x,
                            std::span<const T> gamma, std::span<const T> beta, std::span<const T> running_mean,
                            std::span<const T> running_var, T eps, std::span<T> y);

template <typename T>
void batchnorm_backward_train(std::size_t n, std::size_t c, std::size_t hw, std::span<const T> dy,
                              std::span<const T> xhat, std::span<const T> invstd, std::span<const T> gamma,
                              std::span<T> dx, std::span<T> dgamma, std::span<T> dbeta);

}  // namespace topogan::kernels
