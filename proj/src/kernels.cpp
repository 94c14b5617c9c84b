#include "topogan/kernels.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "topogan/error.hpp"

namespace topogan::kernels {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

using Index = std::ptrdiff_t;

// cols has patch_size() rows and batch*out_h*out_w columns.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t ncols = g.batch * plane;
  const std::size_t k = g.kernel;
#pragma omp parallel for schedule(static)
  for (Index n = 0; n < static_cast<Index>(g.batch); ++n) {
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
      const T* src = x + (n * g.in_channels + ci) * g.in_h * g.in_w;
      for (std::size_t ki = 0; ki < k; ++ki) {
        for (std::size_t kj = 0; kj < k; ++kj) {
          T* dst = cols + ((ci * k + ki) * k + kj) * ncols + n * plane;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
            T* row = dst + oh * g.out_w;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) {
              std::memset(row, 0, g.out_w * sizeof(T));
              continue;
            }
            const T* srow = src + ih * g.in_w;
            for (std::size_t ow = 0; ow < g.out_w; ++ow) {
              const std::ptrdiff_t iw =
                  static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
              row[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w)) ? T(0) : srow[iw];
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back into image space (overwrites x).
template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* x) {
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t ncols = g.batch * plane;
  const std::size_t k = g.kernel;
#pragma omp parallel for schedule(static)
  for (Index n = 0; n < static_cast<Index>(g.batch); ++n) {
    T* img = x + n * g.in_channels * g.in_h * g.in_w;
    std::fill(img, img + g.in_channels * g.in_h * g.in_w, T(0));
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
      T* dst = img + ci * g.in_h * g.in_w;
      for (std::size_t ki = 0; ki < k; ++ki) {
        for (std::size_t kj = 0; kj < k; ++kj) {
          const T* src = cols + ((ci * k + ki) * k + kj) * ncols + n * plane;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
            T* drow = dst + ih * g.in_w;
            const T* srow = src + oh * g.out_w;
            for (std::size_t ow = 0; ow < g.out_w; ++ow) {
              const std::ptrdiff_t iw =
                  static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
              if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in_w)) drow[iw] += srow[ow];
            }
          }
        }
      }
    }
  }
}

// N x C x P  <->  C x (N*P)
template <typename T>
void batch_to_channel_major(std::size_t n, std::size_t c, std::size_t p, const T* src, T* dst) {
#pragma omp parallel for schedule(static)
  for (Index ci = 0; ci < static_cast<Index>(c); ++ci)
    for (std::size_t ni = 0; ni < n; ++ni)
      std::memcpy(dst + (ci * n + ni) * p, src + (ni * c + ci) * p, p * sizeof(T));
}

void check_span(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw ShapeError(std::string(what) + ": expected " + std::to_string(want) + " elements, got " +
                     std::to_string(got));
}

}  // namespace

ConvGeometry ConvGeometry::make(std::size_t batch, std::size_t in_channels, std::size_t in_h, std::size_t in_w,
                                std::size_t out_channels, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride < 1) throw ValueError("conv stride must be >= 1");
  if (kernel < 1) throw ValueError("conv kernel must be >= 1");
  if (kernel > in_h + 2 * pad || kernel > in_w + 2 * pad)
    throw ShapeError("conv kernel " + std::to_string(kernel) + " larger than padded input " +
                     std::to_string(in_h + 2 * pad) + "x" + std::to_string(in_w + 2 * pad));
  ConvGeometry g;
  g.batch = batch;
  g.in_channels = in_channels;
  g.in_h = in_h;
  g.in_w = in_w;
  g.out_channels = out_channels;
  g.kernel = kernel;
  g.stride = stride;
  g.pad = pad;
  g.out_h = (in_h + 2 * pad - kernel) / stride + 1;
  g.out_w = (in_w + 2 * pad - kernel) / stride + 1;
  return g;
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<const T> b,
                    std::span<T> y) {
  check_span(x.size(), g.in_size(), "conv2d input");
  check_span(w.size(), g.weight_size(), "conv2d weight");
  check_span(y.size(), g.out_size(), "conv2d output");
  if (!b.empty()) check_span(b.size(), g.out_channels, "conv2d bias");
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t ncols = g.batch * plane;
  const std::size_t kk = g.patch_size();

  std::vector<T> cols(kk * ncols);
  im2col(g, x.data(), cols.data());
  std::vector<T> ym(g.out_channels * ncols);
  MapMat<T>(ym.data(), g.out_channels, ncols).noalias() =
      CMapMat<T>(w.data(), g.out_channels, kk) * CMapMat<T>(cols.data(), kk, ncols);

#pragma omp parallel for schedule(static)
  for (Index n = 0; n < static_cast<Index>(g.batch); ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const T bias = b.empty() ? T(0) : b[co];
      const T* src = ym.data() + co * ncols + n * plane;
      T* dst = y.data() + (n * g.out_channels + co) * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + bias;
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx) {
  check_span(dy.size(), g.out_size(), "conv2d output grad");
  check_span(w.size(), g.weight_size(), "conv2d weight");
  check_span(dx.size(), g.in_size(), "conv2d input grad");
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t ncols = g.batch * plane;
  const std::size_t kk = g.patch_size();

  std::vector<T> dym(g.out_channels * ncols);
  batch_to_channel_major(g.batch, g.out_channels, plane, dy.data(), dym.data());
  std::vector<T> cols(kk * ncols);
  MapMat<T>(cols.data(), kk, ncols).noalias() =
      CMapMat<T>(w.data(), g.out_channels, kk).transpose() * CMapMat<T>(dym.data(), g.out_channels, ncols);
  col2im(g, cols.data(), dx.data());
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw,
                            std::span<T> db) {
  check_span(x.size(), g.in_size(), "conv2d input");
  check_span(dy.size(), g.out_size(), "conv2d output grad");
  check_span(dw.size(), g.weight_size(), "conv2d weight grad");
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t ncols = g.batch * plane;
  const std::size_t kk = g.patch_size();

  std::vector<T> dym(g.out_channels * ncols);
  batch_to_channel_major(g.batch, g.out_channels, plane, dy.data(), dym.data());
  std::vector<T> cols(kk * ncols);
  im2col(g, x.data(), cols.data());
  MapMat<T>(dw.data(), g.out_channels, kk).noalias() =
      CMapMat<T>(dym.data(), g.out_channels, ncols) * CMapMat<T>(cols.data(), kk, ncols).transpose();
  if (!db.empty()) {
    check_span(db.size(), g.out_channels, "conv2d bias grad");
#pragma omp parallel for schedule(static)
    for (Index co = 0; co < static_cast<Index>(g.out_channels); ++co) {
      double s = 0;
      const T* row = dym.data() + co * ncols;
      for (std::size_t i = 0; i < ncols; ++i) s += row[i];
      db[co] = static_cast<T>(s);
    }
  }
}

template <typename T>
void dense_forward(std::size_t n, std::size_t in, std::size_t out, std::span<const T> x, std::span<const T> w,
                   std::span<const T> b, std::span<T> y) {
  check_span(x.size(), n * in, "dense input");
  check_span(w.size(), in * out, "dense weight");
  check_span(y.size(), n * out, "dense output");
  MapMat<T> ym(y.data(), n, out);
  ym.noalias() = CMapMat<T>(x.data(), n, in) * CMapMat<T>(w.data(), in, out);
  if (!b.empty()) {
    check_span(b.size(), out, "dense bias");
#pragma omp parallel for schedule(static)
    for (Index r = 0; r < static_cast<Index>(n); ++r)
      for (std::size_t o = 0; o < out; ++o) y[r * out + o] += b[o];
  }
}

template <typename T>
void dense_backward(std::size_t n, std::size_t in, std::size_t out, std::span<const T> x, std::span<const T> w,
                    std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db) {
  CMapMat<T> dym(dy.data(), n, out);
  if (!dx.empty()) {
    check_span(dx.size(), n * in, "dense input grad");
    MapMat<T>(dx.data(), n, in).noalias() = dym * CMapMat<T>(w.data(), in, out).transpose();
  }
  if (!dw.empty()) {
    check_span(dw.size(), in * out, "dense weight grad");
    MapMat<T>(dw.data(), in, out).noalias() = CMapMat<T>(x.data(), n, in).transpose() * dym;
  }
  if (!db.empty()) {
    check_span(db.size(), out, "dense bias grad");
    for (std::size_t o = 0; o < out; ++o) {
      double s = 0;
      for (std::size_t r = 0; r < n; ++r) s += dy[r * out + o];
      db[o] = static_cast<T>(s);
    }
  }
}

template <typename T>
void batchnorm_forward_train(std::size_t n, std::size_t c, std::size_t hw, std::span<const T> x,
                             std::span<const T> gamma, std::span<const T> beta, T eps, std::span<T> y,
                             std::span<T> xhat, std::span<T> invstd, std::span<double> mean, std::span<double> var) {
  const double m = static_cast<double>(n * hw);
#pragma omp parallel for schedule(static)
  for (Index ci = 0; ci < static_cast<Index>(c); ++ci) {
    double s = 0;
    for (std::size_t ni = 0; ni < n; ++ni) {
      const T* p = x.data() + (ni * c + ci) * hw;
      for (std::size_t i = 0; i < hw; ++i) s += p[i];
    }
    const double mu = s / m;
    double ss = 0;
    for (std::size_t ni = 0; ni < n; ++ni) {
      const T* p = x.data() + (ni * c + ci) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = p[i] - mu;
        ss += d * d;
      }
    }
    const double v = ss / m;
    const double is = 1.0 / std::sqrt(v + static_cast<double>(eps));
    mean[ci] = mu;
    var[ci] = v;
    invstd[ci] = static_cast<T>(is);
    for (std::size_t ni = 0; ni < n; ++ni) {
      const std::size_t off = (ni * c + ci) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xh = static_cast<T>((x[off + i] - mu) * is);
        xhat[off + i] = xh;
        y[off + i] = gamma[ci] * xh + beta[ci];
      }
    }
  }
}

template <typename T>
void batchnorm_forward_eval(std::size_t n, std::size_t c, std::size_t hw, std::span<const T> x,
                            std::span<const T> gamma, std::span<const T> beta, std::span<const T> running_mean,
                            std::span<const T> running_var, T eps, std::span<T> y) {
#pragma omp parallel for schedule(static)
  for (Index ci = 0; ci < static_cast<Index>(c); ++ci) {
    const T scale = gamma[ci] / std::sqrt(running_var[ci] + eps);
    const T shift = beta[ci] - running_mean[ci] * scale;
    for (std::size_t ni = 0; ni < n; ++ni) {
      const std::size_t off = (ni * c + ci) * hw;
      for (std::size_t i = 0; i < hw; ++i) y[off + i] = x[off + i] * scale + shift;
    }
  }
}

template <typename T>
void batchnorm_backward_train(std::size_t n, std::size_t c, std::size_t hw, std::span<const T> dy,
                              std::span<const T> xhat, std::span<const T> invstd, std::span<const T> gamma,
                              std::span<T> dx, std::span<T> dgamma, std::span<T> dbeta) {
  const double m = static_cast<double>(n * hw);
#pragma omp parallel for schedule(static)
  for (Index ci = 0; ci < static_cast<Index>(c); ++ci) {
    double sdy = 0, sdyx = 0;
    for (std::size_t ni = 0; ni < n; ++ni) {
      const std::size_t off = (ni * c + ci) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        sdy += dy[off + i];
        sdyx += static_cast<double>(dy[off + i]) * xhat[off + i];
      }
    }
    dgamma[ci] = static_cast<T>(sdyx);
    dbeta[ci] = static_cast<T>(sdy);
    if (dx.empty()) continue;
    const double k = static_cast<double>(gamma[ci]) * invstd[ci] / m;
    for (std::size_t ni = 0; ni < n; ++ni) {
      const std::size_t off = (ni * c + ci) * hw;
      for (std::size_t i = 0; i < hw; ++i)
        dx[off + i] = static_cast<T>(k * (m * dy[off + i] - sdy - xhat[off + i] * sdyx));
    }
  }
}

#define TOPOGAN_INSTANTIATE(T)                                                                                   \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,                 \
                                  std::span<const T>, std::span<T>);                                           \
  template void conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,          \
                                         std::span<T>);                                                        \
  template void conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,         \
                                          std::span<T>, std::span<T>);                                         \
  template void dense_forward<T>(std::size_t, std::size_t, std::size_t, std::span<const T>, std::span<const T>, \
                                 std::span<const T>, std::span<T>);                                            \
  template void dense_backward<T>(std::size_t, std::size_t, std::size_t, std::span<const T>,                   \
                                  std::span<const T>, std::span<const T>, std::span<T>, std::span<T>,          \
                                  std::span<T>);                                                               \
  template void batchnorm_forward_train<T>(std::size_t, std::size_t, std::size_t, std::span<const T>,          \
                                           std::span<const T>, std::span<const T>, T, std::span<T>,            \
                                           std::span<T>, std::span<T>, std::span<double>, std::span<double>);  \
  template void batchnorm_forward_eval<T>(std::size_t, std::size_t, std::size_t, std::span<const T>,           \
                                          std::span<const T>, std::span<const T>, std::span<const T>,          \
                                          std::span<const T>, T, std::span<T>);                                \
  template void batchnorm_backward_train<T>(std::size_t, std::size_t, std::size_t, std::span<const T>,         \
                                            std::span<const T>, std::span<const T>, std::span<const T>,        \
                                            std::span<T>, std::span<T>, std::span<T>);

TOPOGAN_INSTANTIATE(float)
TOPOGAN_INSTANTIATE(double)
#undef TOPOGAN_INSTANTIATE

}  // namespace topogan::kernels
