#pragma once

// Serial, loop-level reference implementations of the hot kernels. Kept for
// the test suite and the kernel benchmark; never used on the training path.

#include "topogan/tensor.hpp"

namespace topogan::reference {

// Direct cross-correlation, zero padding. w: Cout x Cin x k x k.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride, std::size_t pad);

// Scatter definition of the transposed convolution. w: Cin x Cout x k x k.
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                            std::size_t pad, std::size_t output_pad);

// Gradient of sum(dy * conv2d(x, w)) with respect to w.
template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& dy, std::size_t kernel, std::size_t stride,
                             std::size_t pad);

// x: n x in, w: in x out, b: out.
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// Two-pass per-channel normalisation with biased variance.
template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps);

}  // namespace topogan::reference
