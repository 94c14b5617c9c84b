// OpenMP kernels against the serial reference on the network's hot shapes.
// Kernel benchmarks take the OpenMP thread count as their argument.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <random>

#include "topogan/kernels.hpp"
#include "topogan/reference.hpp"

using namespace topogan;

namespace {

Tensor<float> random_tensor(Shape shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.f, 1.f);
  for (auto& v : t.span()) v = d(rng);
  return t;
}

struct ConvCase {
  std::size_t batch, cin, h, cout, k, stride, pad;
};

// Classifier first block and a generator upsampling stage (as its adjoint).
constexpr ConvCase kClassifierConv{32, 3, 64, 16, 3, 2, 1};
constexpr ConvCase kGeneratorStage{32, 32, 16, 64, 4, 2, 1};

kernels::ConvGeometry geometry(const ConvCase& c) {
  return kernels::ConvGeometry::make(c.batch, c.cin, c.h, c.h, c.cout, c.k, c.stride, c.pad);
}

void threads_arg(benchmark::internal::Benchmark* b) {
  const int hi = omp_get_max_threads();
  b->Arg(1);
  if (hi > 1) b->Arg(hi);
  b->UseRealTime()->Unit(benchmark::kMillisecond);
}

void BM_conv2d_forward_reference(benchmark::State& state) {
  const auto c = kClassifierConv;
  const auto x = random_tensor({c.batch, c.cin, c.h, c.h}, 1);
  const auto w = random_tensor({c.cout, c.cin, c.k, c.k}, 2);
  const auto b = random_tensor({c.cout}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(reference::conv2d(x, w, b, c.stride, c.pad));
}
BENCHMARK(BM_conv2d_forward_reference)->Unit(benchmark::kMillisecond);

void BM_conv2d_forward_omp(benchmark::State& state) {
  omp_set_num_threads(static_cast<int>(state.range(0)));
  const auto c = kClassifierConv;
  const auto g = geometry(c);
  const auto x = random_tensor({c.batch, c.cin, c.h, c.h}, 1);
  const auto w = random_tensor({c.cout, c.cin, c.k, c.k}, 2);
  const auto b = random_tensor({c.cout}, 3);
  std::vector<float> y(g.out_size());
  for (auto _ : state) {
    kernels::conv2d_forward<float>(g, x.span(), w.span(), b.span(), y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_conv2d_forward_omp)->Apply(threads_arg);

void BM_conv2d_weight_grad_reference(benchmark::State& state) {
  const auto c = kClassifierConv;
  const auto g = geometry(c);
  const auto x = random_tensor({c.batch, c.cin, c.h, c.h}, 1);
  const auto dy = random_tensor({c.batch, c.cout, g.out_h, g.out_w}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(reference::conv2d_weight_grad(x, dy, c.k, c.stride, c.pad));
}
BENCHMARK(BM_conv2d_weight_grad_reference)->Unit(benchmark::kMillisecond);

void BM_conv2d_weight_grad_omp(benchmark::State& state) {
  omp_set_num_threads(static_cast<int>(state.range(0)));
  const auto c = kClassifierConv;
  const auto g = geometry(c);
  const auto x = random_tensor({c.batch, c.cin, c.h, c.h}, 1);
  const auto dy = random_tensor({c.batch, c.cout, g.out_h, g.out_w}, 4);
  std::vector<float> dw(g.weight_size()), db(c.cout);
  for (auto _ : state) {
    kernels::conv2d_backward_weight<float>(g, x.span(), dy.span(), dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
}
BENCHMARK(BM_conv2d_weight_grad_omp)->Apply(threads_arg);

// Transposed convolution 64x8x8 -> 32x16x16.
void BM_transposed_conv_reference(benchmark::State& state) {
  const auto c = kGeneratorStage;
  const auto g = geometry(c);
  const auto x = random_tensor({c.batch, c.cout, g.out_h, g.out_w}, 5);
  const auto w = random_tensor({c.cout, c.cin, c.k, c.k}, 6);
  const Tensor<float> b({c.cin});
  for (auto _ : state) benchmark::DoNotOptimize(reference::transposed_conv2d(x, w, b, c.stride, c.pad, 0));
}
BENCHMARK(BM_transposed_conv_reference)->Unit(benchmark::kMillisecond);

void BM_transposed_conv_omp(benchmark::State& state) {
  omp_set_num_threads(static_cast<int>(state.range(0)));
  const auto c = kGeneratorStage;
  const auto g = geometry(c);
  const auto x = random_tensor({c.batch, c.cout, g.out_h, g.out_w}, 5);
  const auto w = random_tensor({c.cout, c.cin, c.k, c.k}, 6);
  std::vector<float> y(g.in_size());
  for (auto _ : state) {
    kernels::conv2d_backward_input<float>(g, x.span(), w.span(), y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_transposed_conv_omp)->Apply(threads_arg);

// Generator input projection: 100 (+ label) -> 128 x 4 x 4.
constexpr std::size_t kDenseN = 256, kDenseIn = 108, kDenseOut = 2048;

void BM_dense_reference(benchmark::State& state) {
  const auto x = random_tensor({kDenseN, kDenseIn}, 7);
  const auto w = random_tensor({kDenseIn, kDenseOut}, 8);
  const auto b = random_tensor({kDenseOut}, 9);
  for (auto _ : state) benchmark::DoNotOptimize(reference::dense(x, w, b));
}
BENCHMARK(BM_dense_reference)->Unit(benchmark::kMillisecond);

void BM_dense_omp(benchmark::State& state) {
  omp_set_num_threads(static_cast<int>(state.range(0)));
  const auto x = random_tensor({kDenseN, kDenseIn}, 7);
  const auto w = random_tensor({kDenseIn, kDenseOut}, 8);
  const auto b = random_tensor({kDenseOut}, 9);
  std::vector<float> y(kDenseN * kDenseOut);
  for (auto _ : state) {
    kernels::dense_forward<float>(kDenseN, kDenseIn, kDenseOut, x.span(), w.span(), b.span(), y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_dense_omp)->Apply(threads_arg);

// Batch norm over 32 x 16 x 32 x 32.
constexpr std::size_t kBnN = 32, kBnC = 16, kBnHw = 32 * 32;

void BM_batchnorm_reference(benchmark::State& state) {
  const auto x = random_tensor({kBnN, kBnC, 32, 32}, 10);
  const Tensor<float> gamma({kBnC}, 1.f), beta({kBnC});
  for (auto _ : state) benchmark::DoNotOptimize(reference::batchnorm_train(x, gamma, beta, 1e-5));
}
BENCHMARK(BM_batchnorm_reference)->Unit(benchmark::kMillisecond);

void BM_batchnorm_omp(benchmark::State& state) {
  omp_set_num_threads(static_cast<int>(state.range(0)));
  const auto x = random_tensor({kBnN, kBnC, 32, 32}, 10);
  const Tensor<float> gamma({kBnC}, 1.f), beta({kBnC});
  std::vector<float> y(x.size()), xhat(x.size()), invstd(kBnC);
  std::vector<double> mean(kBnC), var(kBnC);
  for (auto _ : state) {
    kernels::batchnorm_forward_train<float>(kBnN, kBnC, kBnHw, x.span(), gamma.span(), beta.span(), 1e-5f, y, xhat,
                                            invstd, mean, var);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_batchnorm_omp)->Apply(threads_arg);

}  // namespace

BENCHMARK_MAIN();
