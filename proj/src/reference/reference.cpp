#include "topogan/reference.hpp"

#include <cmath>

namespace topogan::reference {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) throw ShapeError("reference conv2d: channel mismatch");
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor<T> y({n, cout, oh, ow});
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          T acc = b.empty() ? T(0) : b[co];
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t ki = 0; ki < k; ++ki)
              for (std::size_t kj = 0; kj < k; ++kj) {
                const long r = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                const long c = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(wd)) continue;
                acc += x.at(ni, ci, r, c) * w.at(co, ci, ki, kj);
              }
          y.at(ni, co, i, j) = acc;
        }
  return y;
}

template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                            std::size_t pad, std::size_t output_pad) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(1), k = w.dim(2);
  if (w.dim(0) != cin) throw ShapeError("reference transposed_conv2d: channel mismatch");
  const std::size_t oh = (h - 1) * stride + k + output_pad - 2 * pad;
  const std::size_t ow = (wd - 1) * stride + k + output_pad - 2 * pad;
  Tensor<T> y({n, cout, oh, ow});
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) y.at(ni, co, i, j) = b.empty() ? T(0) : b[co];
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < wd; ++j)
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t ki = 0; ki < k; ++ki)
              for (std::size_t kj = 0; kj < k; ++kj) {
                const long r = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                const long c = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                if (r < 0 || c < 0 || r >= static_cast<long>(oh) || c >= static_cast<long>(ow)) continue;
                y.at(ni, co, r, c) += x.at(ni, ci, i, j) * w.at(ci, co, ki, kj);
              }
  return y;
}

template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& dy, std::size_t kernel, std::size_t stride,
                             std::size_t pad) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = dy.dim(1), oh = dy.dim(2), ow = dy.dim(3);
  Tensor<T> dw({cout, cin, kernel, kernel});
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t ki = 0; ki < kernel; ++ki)
        for (std::size_t kj = 0; kj < kernel; ++kj) {
          T acc = 0;
          for (std::size_t ni = 0; ni < n; ++ni)
            for (std::size_t i = 0; i < oh; ++i)
              for (std::size_t j = 0; j < ow; ++j) {
                const long r = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                const long c = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(wd)) continue;
                acc += x.at(ni, ci, r, c) * dy.at(ni, co, i, j);
              }
          dw.at(co, ci, ki, kj) = acc;
        }
  return dw;
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const std::size_t n = x.dim(0), in = x.dim(1), out = w.dim(1);
  if (w.dim(0) != in) throw ShapeError("reference dense: inner dimension mismatch");
  Tensor<T> y({n, out});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      T acc = b.empty() ? T(0) : b[o];
      for (std::size_t i = 0; i < in; ++i) acc += x[r * in + i] * w[i * out + o];
      y[r * out + o] = acc;
    }
  return y;
}

template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.size() / (n * c);
  Tensor<T> y(x.shape());
  for (std::size_t ci = 0; ci < c; ++ci) {
    double mean = 0;
    for (std::size_t ni = 0; ni < n; ++ni)
      for (std::size_t i = 0; i < hw; ++i) mean += x[(ni * c + ci) * hw + i];
    mean /= static_cast<double>(n * hw);
    double var = 0;
    for (std::size_t ni = 0; ni < n; ++ni)
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = x[(ni * c + ci) * hw + i] - mean;
        var += d * d;
      }
    var /= static_cast<double>(n * hw);
    for (std::size_t ni = 0; ni < n; ++ni)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t idx = (ni * c + ci) * hw + i;
        y[idx] = static_cast<T>(gamma[ci] * (x[idx] - mean) / std::sqrt(var + eps) + beta[ci]);
      }
  }
  return y;
}

#define TOPOGAN_INSTANTIATE(T)                                                                                    \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
  template Tensor<T> transposed_conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,    \
                                          std::size_t, std::size_t);                                            \
  template Tensor<T> conv2d_weight_grad<T>(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t,        \
                                           std::size_t);                                                        \
  template Tensor<T> dense<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> batchnorm_train<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);

TOPOGAN_INSTANTIATE(float)
TOPOGAN_INSTANTIATE(double)
#undef TOPOGAN_INSTANTIATE

}  // namespace topogan::reference
