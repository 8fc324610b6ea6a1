// Parallel (OpenMP + BLAS) conv kernels against the serial reference loops.
#include <random>

#include <benchmark/benchmark.h>

#include "vtok/kernels.hpp"

using namespace vtok;

namespace {

struct Case {
    ConvGeometry g;
    Tensor<float> x, w, b, y;
};

Case make_case(int t, int c, int hw, int co) {
    Case k;
    k.g.in_channels = c;
    k.g.out_channels = co;
    k.g.kt = 3;
    k.g.kh = k.g.kw = 3;
    k.x = Tensor<float>({t, c, hw, hw});
    k.w = Tensor<float>(k.g.weight_shape());
    k.b = Tensor<float>({co});
    std::mt19937_64 rng(7);
    std::normal_distribution<float> nd(0.f, 1.f);
    for (std::size_t i = 0; i < k.x.numel(); ++i) k.x[i] = nd(rng);
    for (std::size_t i = 0; i < k.w.numel(); ++i) k.w[i] = nd(rng) * 0.1f;
    k.y = Tensor<float>(k.g.output_shape(k.x.shape()));
    return k;
}

void BM_ConvForwardParallel(benchmark::State& st) {
    Case k = make_case(5, int(st.range(0)), int(st.range(1)), int(st.range(0)));
    for (auto _ : st) {
        kernels::conv3d_forward(k.g, k.x, k.w.data(), k.b.data(), k.y);
        benchmark::DoNotOptimize(k.y.data());
    }
}

void BM_ConvForwardReference(benchmark::State& st) {
    Case k = make_case(5, int(st.range(0)), int(st.range(1)), int(st.range(0)));
    for (auto _ : st) {
        reference::conv3d_forward(k.g, k.x, k.w.data(), k.b.data(), k.y);
        benchmark::DoNotOptimize(k.y.data());
    }
}

void BM_ConvBackwardParallel(benchmark::State& st) {
    Case k = make_case(5, int(st.range(0)), int(st.range(1)), int(st.range(0)));
    Tensor<float> dx(k.x.shape()), dw(k.w.shape()), db({k.g.out_channels});
    for (std::size_t i = 0; i < k.y.numel(); ++i) k.y[i] = 0.01f * float(i % 17);
    for (auto _ : st) {
        kernels::conv3d_backward(k.g, k.x, k.w.data(), k.y, &dx, dw.data(), db.data());
        benchmark::DoNotOptimize(dx.data());
    }
}

void BM_ConvBackwardReference(benchmark::State& st) {
    Case k = make_case(5, int(st.range(0)), int(st.range(1)), int(st.range(0)));
    Tensor<float> dx(k.x.shape()), dw(k.w.shape()), db({k.g.out_channels});
    for (std::size_t i = 0; i < k.y.numel(); ++i) k.y[i] = 0.01f * float(i % 17);
    for (auto _ : st) {
        reference::conv3d_backward(k.g, k.x, k.w.data(), k.y, &dx, dw.data(), db.data());
        benchmark::DoNotOptimize(dx.data());
    }
}

}  // namespace

BENCHMARK(BM_ConvForwardParallel)->Args({8, 32})->Args({32, 32})->Args({32, 64});
BENCHMARK(BM_ConvForwardReference)->Args({8, 32})->Args({32, 32})->Args({32, 64});
BENCHMARK(BM_ConvBackwardParallel)->Args({8, 32})->Args({32, 32});
BENCHMARK(BM_ConvBackwardReference)->Args({8, 32})->Args({32, 32});

BENCHMARK_MAIN();
