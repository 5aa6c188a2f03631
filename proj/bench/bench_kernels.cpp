// Serial reference kernels vs the OpenMP/GEMM kernels.

#include <benchmark/benchmark.h>

#include <random>

#include "redgan/kernels.hpp"

using namespace redgan;
using namespace redgan::kernels;

namespace {

std::vector<float> noise(std::size_t n, unsigned seed)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(-1, 1);
    std::vector<float> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

template <bool Parallel>
void conv_forward(benchmark::State& st)
{
    const std::size_t c = static_cast<std::size_t>(st.range(0)), s = static_cast<std::size_t>(st.range(1));
    const ConvGeometry g = conv_geometry(Shape{4, c, s, s}, Shape{c, c, 3, 3}, 1, 1);
    auto x = noise(4 * c * s * s, 1), w = noise(c * c * 9, 2), b = noise(c, 3);
    std::vector<float> y(4 * c * g.out_plane());
    for (auto _ : st) {
        if constexpr (Parallel)
            parallel::conv2d_forward(g, x.data(), w.data(), b.data(), y.data());
        else
            serial::conv2d_forward(g, x.data(), w.data(), b.data(), y.data());
        benchmark::DoNotOptimize(y.data());
    }
    st.counters["flops"] = benchmark::Counter(2.0 * 4 * c * c * 9 * g.out_plane(),
                                              benchmark::Counter::kIsIterationInvariantRate);
}

template <bool Parallel>
void conv_backward(benchmark::State& st)
{
    const std::size_t c = static_cast<std::size_t>(st.range(0)), s = static_cast<std::size_t>(st.range(1));
    const ConvGeometry g = conv_geometry(Shape{4, c, s, s}, Shape{c, c, 3, 3}, 1, 1);
    auto x = noise(4 * c * s * s, 1), w = noise(c * c * 9, 2), gy = noise(4 * c * g.out_plane(), 3);
    std::vector<float> gx(x.size()), gw(w.size()), gb(c);
    for (auto _ : st) {
        if constexpr (Parallel) {
            parallel::conv2d_backward_input(g, gy.data(), w.data(), gx.data());
            parallel::conv2d_backward_weight(g, gy.data(), x.data(), gw.data(), gb.data());
        } else {
            serial::conv2d_backward_input(g, gy.data(), w.data(), gx.data());
            serial::conv2d_backward_weight(g, gy.data(), x.data(), gw.data(), gb.data());
        }
        benchmark::DoNotOptimize(gx.data());
    }
}

template <bool Parallel>
void matmul(benchmark::State& st)
{
    const auto n = static_cast<std::size_t>(st.range(0));
    auto a = noise(n * n, 1), b = noise(n * n, 2);
    std::vector<float> c(n * n);
    for (auto _ : st) {
        if constexpr (Parallel)
            parallel::matmul(n, n, n, a.data(), b.data(), c.data());
        else
            serial::matmul(n, n, n, a.data(), b.data(), c.data());
        benchmark::DoNotOptimize(c.data());
    }
}

} // namespace

BENCHMARK(conv_forward<false>)->Args({32, 32})->Args({64, 16});
BENCHMARK(conv_forward<true>)->Args({32, 32})->Args({64, 16});
BENCHMARK(conv_backward<false>)->Args({32, 32})->Args({64, 16});
BENCHMARK(conv_backward<true>)->Args({32, 32})->Args({64, 16});
BENCHMARK(matmul<false>)->Arg(128)->Arg(256);
BENCHMARK(matmul<true>)->Arg(128)->Arg(256);

BENCHMARK_MAIN();
