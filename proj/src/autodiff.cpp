#include "topogan/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "topogan/kernels.hpp"

namespace topogan::ad {
namespace {

using Index = std::ptrdiff_t;
constexpr std::size_t kParallelMin = 1 << 14;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

// Builds the result node; parents and closure are dropped when no parent
// needs a gradient.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<NodePtr<T>> parents, std::function<void(Node<T>&)> fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward = std::move(fn);
  }
  return Var<T>(std::move(node));
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank)
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(s));
}

template <typename T, typename F>
Var<T> unary_elementwise(const Var<T>& x, F forward, std::function<T(T x, T y)> derivative) {
  Tensor<T> y(x.shape());
  const std::size_t n = y.size();
  const T* xs = x.value().data();
  T* ys = y.data();
#pragma omp parallel for schedule(static) if (n > kParallelMin)
  for (Index i = 0; i < static_cast<Index>(n); ++i) ys[i] = forward(xs[i]);
  return make_result<T>(std::move(y), {x.node()}, [derivative](Node<T>& self) {
    auto& in = *self.parents[0];
    if (!in.requires_grad) return;
    const std::size_t n = self.value.size();
    std::vector<T> g(n);
#pragma omp parallel for schedule(static) if (n > kParallelMin)
    for (Index i = 0; i < static_cast<Index>(n); ++i)
      g[i] = self.grad[i] * derivative(in.value[i], self.value[i]);
    in.accumulate(g);
  });
}

}  // namespace

template <typename T>
Tensor<T>& Node<T>::grad_buffer() {
  if (grad.empty()) grad = Tensor<T>(value.shape());
  return grad;
}

template <typename T>
void Node<T>::accumulate(std::span<const T> g) {
  auto& buf = grad_buffer();
  if (g.size() != buf.size()) throw ShapeError("gradient size mismatch during accumulation");
  T* d = buf.data();
  const std::size_t n = g.size();
#pragma omp parallel for schedule(static) if (n > kParallelMin)
  for (Index i = 0; i < static_cast<Index>(n); ++i) d[i] += g[i];
}

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename T>
Parameter<T>::Parameter(std::string name, Tensor<T> value) : name_(std::move(name)), node_(std::make_shared<Node<T>>()) {
  node_->grad = Tensor<T>(value.shape());
  node_->value = std::move(value);
  node_->requires_grad = true;
}

template <typename T>
void backward(const Var<T>& output) {
  if (!output.defined() || output.value().size() != 1)
    throw ShapeError("backward requires a scalar output, got " +
                     (output.defined() ? shape_str(output.shape()) : std::string("undefined")));
  if (!output.requires_grad()) return;

  // Iterative post-order DFS.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{output.node().get(), 0}};
  seen.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  output.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  return make_result<T>(std::move(y), {a.node(), b.node()}, [](Node<T>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->accumulate(self.grad.span());
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  return make_result<T>(std::move(y), {a.node(), b.node()}, [](Node<T>& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad.span());
    if (self.parents[1]->requires_grad) {
      std::vector<T> g(self.grad.size());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = -self.grad[i];
      self.parents[1]->accumulate(g);
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  return make_result<T>(std::move(y), {a.node(), b.node()}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    std::vector<T> g(self.grad.size());
    if (pa.requires_grad) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * pb.value[i];
      pa.accumulate(g);
    }
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * pa.value[i];
      pb.accumulate(g);
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * factor;
  return make_result<T>(std::move(y), {a.node()}, [factor](Node<T>& self) {
    std::vector<T> g(self.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * factor;
    self.parents[0]->accumulate(g);
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  double s = 0;
  for (auto v : a.value().vec()) s += v;
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(s)), {a.node()}, [](Node<T>& self) {
    std::vector<T> g(self.parents[0]->value.size(), self.grad[0]);
    self.parents[0]->accumulate(g);
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> y = a.value().reshaped(std::move(shape));
  return make_result<T>(std::move(y), {a.node()},
                        [](Node<T>& self) { self.parents[0]->accumulate(self.grad.span()); });
}

template <typename T>
Var<T> concat(const Var<T>& a, const Var<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sa.size() != sb.size() || sa[0] != sb[0])
    throw ShapeError("concat: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  for (std::size_t i = 2; i < sa.size(); ++i)
    if (sa[i] != sb[i]) throw ShapeError("concat: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  const std::size_t inner = shape_numel(Shape(sa.begin() + 2, sa.end()));
  const std::size_t na = sa[1] * inner, nb = sb[1] * inner, n = sa[0];
  Shape out = sa;
  out[1] = sa[1] + sb[1];
  Tensor<T> y(out);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a.value().data() + r * na, na, y.data() + r * (na + nb));
    std::copy_n(b.value().data() + r * nb, nb, y.data() + r * (na + nb) + na);
  }
  return make_result<T>(std::move(y), {a.node(), b.node()}, [n, na, nb](Node<T>& self) {
    for (int side = 0; side < 2; ++side) {
      auto& p = *self.parents[side];
      if (!p.requires_grad) continue;
      const std::size_t len = side == 0 ? na : nb;
      const std::size_t off = side == 0 ? 0 : na;
      std::vector<T> g(n * len);
      for (std::size_t r = 0; r < n; ++r)
        std::copy_n(self.grad.data() + r * (na + nb) + off, len, g.data() + r * len);
      p.accumulate(g);
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t pad) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(w.shape(), 4, "conv2d weight");
  if (w.shape()[1] != x.shape()[1])
    throw ShapeError("conv2d: input has " + std::to_string(x.shape()[1]) + " channels but weight " +
                     shape_str(w.shape()) + " expects " + std::to_string(w.shape()[1]));
  if (w.shape()[2] != w.shape()[3]) throw ShapeError("conv2d: kernel must be square, got " + shape_str(w.shape()));
  const bool has_bias = b.defined();
  if (has_bias && b.value().size() != w.shape()[0]) throw ShapeError("conv2d: bias length must equal Cout");
  const auto g = kernels::ConvGeometry::make(x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3], w.shape()[0],
                                             w.shape()[2], stride, pad);
  Tensor<T> y({g.batch, g.out_channels, g.out_h, g.out_w});
  kernels::conv2d_forward<T>(g, x.value().span(), w.value().span(),
                             has_bias ? b.value().span() : std::span<const T>{}, y.span());
  std::vector<NodePtr<T>> parents{x.node(), w.node()};
  if (has_bias) parents.push_back(b.node());
  return make_result<T>(std::move(y), std::move(parents), [g](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    if (px.requires_grad) {
      std::vector<T> dx(g.in_size());
      kernels::conv2d_backward_input<T>(g, self.grad.span(), pw.value.span(), dx);
      px.accumulate(dx);
    }
    const bool bias_grad = self.parents.size() > 2 && self.parents[2]->requires_grad;
    if (pw.requires_grad || bias_grad) {
      std::vector<T> dw(g.weight_size());
      std::vector<T> db(bias_grad ? g.out_channels : 0);
      kernels::conv2d_backward_weight<T>(g, px.value.span(), self.grad.span(), dw, db);
      if (pw.requires_grad) pw.accumulate(dw);
      if (bias_grad) self.parents[2]->accumulate(db);
    }
  });
}

template <typename T>
Var<T> transposed_conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t pad,
                         std::size_t output_pad) {
  require_rank(x.shape(), 4, "transposed_conv2d input");
  require_rank(w.shape(), 4, "transposed_conv2d weight");
  if (output_pad >= stride)
    throw ValueError("transposed_conv2d: output_pad (" + std::to_string(output_pad) + ") must be < stride (" +
                     std::to_string(stride) + ")");
  if (w.shape()[0] != x.shape()[1])
    throw ShapeError("transposed_conv2d: input has " + std::to_string(x.shape()[1]) + " channels but weight " +
                     shape_str(w.shape()) + " expects " + std::to_string(w.shape()[0]));
  const std::size_t k = w.shape()[2];
  const std::size_t cout = w.shape()[1];
  const std::size_t h = x.shape()[2], wd = x.shape()[3];
  if ((h - 1) * stride + k + output_pad < 2 * pad + 1 || (wd - 1) * stride + k + output_pad < 2 * pad + 1)
    throw ShapeError("transposed_conv2d: padding leaves an empty output");
  const std::size_t oh = (h - 1) * stride + k + output_pad - 2 * pad;
  const std::size_t ow = (wd - 1) * stride + k + output_pad - 2 * pad;
  const bool has_bias = b.defined();
  if (has_bias && b.value().size() != cout) throw ShapeError("transposed_conv2d: bias length must equal Cout");
  // Geometry of the forward convolution mapping the output back to the input.
  const auto g = kernels::ConvGeometry::make(x.shape()[0], cout, oh, ow, x.shape()[1], k, stride, pad);
  if (g.out_h != h || g.out_w != wd) throw ShapeError("transposed_conv2d: inconsistent geometry");
  Tensor<T> y({g.batch, cout, oh, ow});
  kernels::conv2d_backward_input<T>(g, x.value().span(), w.value().span(), y.span());
  if (has_bias) {
    const std::size_t plane = oh * ow;
    for (std::size_t n = 0; n < g.batch; ++n)
      for (std::size_t c = 0; c < cout; ++c) {
        T* p = y.data() + (n * cout + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] += b.value()[c];
      }
  }
  std::vector<NodePtr<T>> parents{x.node(), w.node()};
  if (has_bias) parents.push_back(b.node());
  return make_result<T>(std::move(y), std::move(parents), [g](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    if (px.requires_grad) {
      std::vector<T> dx(g.out_size());
      kernels::conv2d_forward<T>(g, self.grad.span(), pw.value.span(), std::span<const T>{}, dx);
      px.accumulate(dx);
    }
    if (pw.requires_grad) {
      std::vector<T> dw(g.weight_size());
      kernels::conv2d_backward_weight<T>(g, self.grad.span(), px.value.span(), dw, std::span<T>{});
      pw.accumulate(dw);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      const std::size_t c = g.in_channels, plane = g.in_h * g.in_w;
      std::vector<T> db(c);
      for (std::size_t ci = 0; ci < c; ++ci) {
        double s = 0;
        for (std::size_t n = 0; n < g.batch; ++n) {
          const T* p = self.grad.data() + (n * c + ci) * plane;
          for (std::size_t i = 0; i < plane; ++i) s += p[i];
        }
        db[ci] = static_cast<T>(s);
      }
      self.parents[2]->accumulate(db);
    }
  });
}

template <typename T>
Var<T> batchnorm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T>& stats, Mode mode,
                   double momentum, double eps) {
  require_rank(x.shape(), 4, "batchnorm2d input");
  const std::size_t n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  if (gamma.value().size() != c || beta.value().size() != c)
    throw ShapeError("batchnorm2d: gamma/beta length must equal channel count " + std::to_string(c));
  if (stats.running_mean.empty()) {
    stats.running_mean = Tensor<T>({c}, T(0));
    stats.running_var = Tensor<T>({c}, T(1));
  }
  Tensor<T> y(x.shape());
  if (mode == Mode::eval) {
    kernels::batchnorm_forward_eval<T>(n, c, hw, x.value().span(), gamma.value().span(), beta.value().span(),
                                       stats.running_mean.span(), stats.running_var.span(), static_cast<T>(eps),
                                       y.span());
    return make_result<T>(std::move(y), {x.node(), gamma.node(), beta.node()}, [](Node<T>&) {
      throw ValueError("batchnorm2d: backward through eval mode is not supported");
    });
  }
  if (n * hw <= 1) throw ValueError("batchnorm2d: train mode needs more than one value per channel");
  auto xhat = std::make_shared<Tensor<T>>(x.shape());
  auto invstd = std::make_shared<Tensor<T>>(Shape{c});
  std::vector<double> bmean(c), bvar(c);
  kernels::batchnorm_forward_train<T>(n, c, hw, x.value().span(), gamma.value().span(), beta.value().span(),
                                      static_cast<T>(eps), y.span(), xhat->span(), invstd->span(), bmean, bvar);
  const double m = static_cast<double>(n * hw);
  const double mom = std::max(momentum, 1.0 / static_cast<double>(++stats.updates));
  for (std::size_t ci = 0; ci < c; ++ci) {
    stats.running_mean[ci] = static_cast<T>((1 - mom) * stats.running_mean[ci] + mom * bmean[ci]);
    stats.running_var[ci] = static_cast<T>((1 - mom) * stats.running_var[ci] + mom * bvar[ci] * m / (m - 1));
  }
  return make_result<T>(std::move(y), {x.node(), gamma.node(), beta.node()}, [n, c, hw, xhat, invstd](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    std::vector<T> dx(px.requires_grad ? n * c * hw : 0), dg(c), dbeta(c);
    kernels::batchnorm_backward_train<T>(n, c, hw, self.grad.span(), xhat->span(), invstd->span(), pg.value.span(),
                                         dx, dg, dbeta);
    if (px.requires_grad) px.accumulate(dx);
    if (pg.requires_grad) pg.accumulate(dg);
    if (pb.requires_grad) pb.accumulate(dbeta);
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return unary_elementwise<T>(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return unary_elementwise<T>(
      x, [slope](T v) { return v > T(0) ? v : slope * v; }, [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return unary_elementwise<T>(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return unary_elementwise<T>(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
  if (x.shape().empty()) throw ShapeError("softmax: rank-0 input");
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.value().size() / k;
  Tensor<T> y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = x.value().data() + r * k;
    T* p = y.data() + r * k;
    const T mx = *std::max_element(z, z + k);
    double s = 0;
    for (std::size_t i = 0; i < k; ++i) s += std::exp(static_cast<double>(z[i] - mx));
    for (std::size_t i = 0; i < k; ++i) p[i] = static_cast<T>(std::exp(static_cast<double>(z[i] - mx)) / s);
  }
  return make_result<T>(std::move(y), {x.node()}, [rows, k](Node<T>& self) {
    std::vector<T> g(rows * k);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* p = self.value.data() + r * k;
      const T* dy = self.grad.data() + r * k;
      double dot = 0;
      for (std::size_t i = 0; i < k; ++i) dot += static_cast<double>(dy[i]) * p[i];
      for (std::size_t i = 0; i < k; ++i) g[r * k + i] = static_cast<T>(p[i] * (dy[i] - dot));
    }
    self.parents[0]->accumulate(g);
  });
}

template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  require_rank(x.shape(), 2, "dense input");
  require_rank(w.shape(), 2, "dense weight");
  const std::size_t n = x.shape()[0], in = x.shape()[1], out = w.shape()[1];
  if (w.shape()[0] != in)
    throw ShapeError("dense: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
  const bool has_bias = b.defined();
  if (has_bias && b.value().size() != out) throw ShapeError("dense: bias length must equal output width");
  Tensor<T> y({n, out});
  kernels::dense_forward<T>(n, in, out, x.value().span(), w.value().span(),
                            has_bias ? b.value().span() : std::span<const T>{}, y.span());
  std::vector<NodePtr<T>> parents{x.node(), w.node()};
  if (has_bias) parents.push_back(b.node());
  return make_result<T>(std::move(y), std::move(parents), [n, in, out](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    const bool bias_grad = self.parents.size() > 2 && self.parents[2]->requires_grad;
    std::vector<T> dx(px.requires_grad ? n * in : 0), dw(pw.requires_grad ? in * out : 0), db(bias_grad ? out : 0);
    kernels::dense_backward<T>(n, in, out, px.value.span(), pw.value.span(), self.grad.span(), dx, dw, db);
    if (px.requires_grad) px.accumulate(dx);
    if (pw.requires_grad) pw.accumulate(dw);
    if (bias_grad) self.parents[2]->accumulate(db);
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool input");
  const std::size_t n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  Tensor<T> y({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0;
    const T* p = x.value().data() + i * hw;
    for (std::size_t j = 0; j < hw; ++j) s += p[j];
    y[i] = static_cast<T>(s / static_cast<double>(hw));
  }
  return make_result<T>(std::move(y), {x.node()}, [n, c, hw](Node<T>& self) {
    std::vector<T> g(n * c * hw);
    const T inv = T(1) / static_cast<T>(hw);
    for (std::size_t i = 0; i < n * c; ++i) std::fill_n(g.data() + i * hw, hw, self.grad[i] * inv);
    self.parents[0]->accumulate(g);
  });
}

template <typename T>
Var<T> binary_cross_entropy(const Var<T>& prediction, const Tensor<T>& target) {
  require_same_shape(prediction.shape(), target.shape(), "binary_cross_entropy");
  const auto& p = prediction.value();
  const std::size_t n = p.size();
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(p[i] >= T(0) && p[i] <= T(1)))
      throw ValueError("binary_cross_entropy: prediction " + std::to_string(p[i]) + " outside [0, 1]");
    const double q = std::clamp(static_cast<double>(p[i]), kEpsClip, 1.0 - kEpsClip);
    const double t = target[i];
    s -= t * std::log(q) + (1 - t) * std::log(1 - q);
  }
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(s / static_cast<double>(n))), {prediction.node()},
                        [target, n](Node<T>& self) {
                          const auto& p = self.parents[0]->value;
                          std::vector<T> g(n);
                          const double scale = self.grad[0] / static_cast<double>(n);
                          for (std::size_t i = 0; i < n; ++i) {
                            const double q = std::clamp(static_cast<double>(p[i]), kEpsClip, 1.0 - kEpsClip);
                            const double t = target[i];
                            g[i] = static_cast<T>(scale * (-t / q + (1 - t) / (1 - q)));
                          }
                          self.parents[0]->accumulate(g);
                        });
}

template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const Tensor<T>& target) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy logits");
  require_same_shape(logits.shape(), target.shape(), "softmax_cross_entropy");
  const std::size_t rows = logits.shape()[0], k = logits.shape()[1];
  auto probs = std::make_shared<std::vector<double>>(rows * k);
  double loss = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = logits.value().data() + r * k;
    const double mx = *std::max_element(z, z + k);
    double s = 0;
    for (std::size_t i = 0; i < k; ++i) s += std::exp(z[i] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t i = 0; i < k; ++i) {
      (*probs)[r * k + i] = std::exp(z[i] - lse);
      loss -= target[r * k + i] * (z[i] - lse);
    }
  }
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(loss / static_cast<double>(rows))), {logits.node()},
                        [target, probs, rows, k](Node<T>& self) {
                          std::vector<T> g(rows * k);
                          const double scale = self.grad[0] / static_cast<double>(rows);
                          for (std::size_t r = 0; r < rows; ++r) {
                            double tsum = 0;
                            for (std::size_t i = 0; i < k; ++i) tsum += target[r * k + i];
                            for (std::size_t i = 0; i < k; ++i)
                              g[r * k + i] = static_cast<T>(scale * ((*probs)[r * k + i] * tsum - target[r * k + i]));
                          }
                          self.parents[0]->accumulate(g);
                        });
}

template <typename T>
Tensor<T> one_hot(std::span<const int> labels, std::size_t classes) {
  if (labels.empty()) throw ValueError("one_hot: empty label list");
  Tensor<T> t({labels.size(), classes});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes)
      throw ValueError("one_hot: label " + std::to_string(labels[r]) + " outside [0, " + std::to_string(classes) + ")");
    t[r * classes + static_cast<std::size_t>(labels[r])] = T(1);
  }
  return t;
}

#define TOPOGAN_INSTANTIATE(T)                                                                                  \
  template struct Node<T>;                                                                                    \
  template class Var<T>;                                                                                      \
  template class Parameter<T>;                                                                                \
  template void backward<T>(const Var<T>&);                                                                   \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> scale<T>(const Var<T>&, T);                                                                 \
  template Var<T> sum<T>(const Var<T>&);                                                                      \
  template Var<T> mean<T>(const Var<T>&);                                                                     \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                                           \
  template Var<T> concat<T>(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t);           \
  template Var<T> transposed_conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t, \
                                       std::size_t);                                                          \
  template Var<T> batchnorm2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormStats<T>&, Mode,       \
                                 double, double);                                                             \
  template Var<T> relu<T>(const Var<T>&);                                                                     \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                                            \
  template Var<T> tanh<T>(const Var<T>&);                                                                     \
  template Var<T> sigmoid<T>(const Var<T>&);                                                                  \
  template Var<T> softmax<T>(const Var<T>&);                                                                  \
  template Var<T> dense<T>(const Var<T>&, const Var<T>&, const Var<T>&);                                      \
  template Var<T> global_avg_pool<T>(const Var<T>&);                                                          \
  template Var<T> binary_cross_entropy<T>(const Var<T>&, const Tensor<T>&);                                   \
  template Var<T> softmax_cross_entropy<T>(const Var<T>&, const Tensor<T>&);                                  \
  template Tensor<T> one_hot<T>(std::span<const int>, std::size_t);

TOPOGAN_INSTANTIATE(float)
TOPOGAN_INSTANTIATE(double)
#undef TOPOGAN_INSTANTIATE

}  // namespace topogan::ad
