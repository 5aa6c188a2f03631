#include "redgan/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <omp.h>

namespace redgan::kernels {

void set_num_threads(int n)
{
    if (n > 0) omp_set_num_threads(n);
}

int num_threads() { return omp_get_max_threads(); }

namespace parallel {
namespace {

constexpr std::size_t kMr = 4;

template <class T>
constexpr std::size_t kNr = 128 / sizeof(T);

// Full kMr x kNr tile: accumulators stay in registers across the k loop.
template <class T>
void micro_full(std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc)
{
    constexpr std::size_t nr = kNr<T>;
    T acc[kMr][nr] = {};
    for (std::size_t p = 0; p < k; ++p) {
        const T* bp = b + p * ldb;
        const T a0 = a[p], a1 = a[lda + p], a2 = a[2 * lda + p], a3 = a[3 * lda + p];
#pragma omp simd
        for (std::size_t j = 0; j < nr; ++j) {
            acc[0][j] += a0 * bp[j];
            acc[1][j] += a1 * bp[j];
            acc[2][j] += a2 * bp[j];
            acc[3][j] += a3 * bp[j];
        }
    }
    for (std::size_t r = 0; r < kMr; ++r)
#pragma omp simd
        for (std::size_t j = 0; j < nr; ++j) c[r * ldc + j] += acc[r][j];
}

template <class T>
void micro_edge(std::size_t mr, std::size_t nr, std::size_t k, const T* a, std::size_t lda, const T* b,
                std::size_t ldb, T* c, std::size_t ldc)
{
    T acc[kMr][kNr<T>] = {};
    for (std::size_t p = 0; p < k; ++p) {
        const T* bp = b + p * ldb;
        for (std::size_t r = 0; r < mr; ++r) {
            const T ar = a[r * lda + p];
#pragma omp simd
            for (std::size_t j = 0; j < nr; ++j) acc[r][j] += ar * bp[j];
        }
    }
    for (std::size_t r = 0; r < mr; ++r)
        for (std::size_t j = 0; j < nr; ++j) c[r * ldc + j] += acc[r][j];
}

// C[i][j] += sum_p A[i][p] * B[j][p] for a tile of up to 4 x 4 rows, with
// lane-wise partial sums reduced at the end.
template <class T>
void dot_tile(std::size_t mr, std::size_t nr, std::size_t k, const T* a, std::size_t lda, const T* b,
              std::size_t ldb, T* c, std::size_t ldc)
{
    constexpr std::size_t lanes = 64 / sizeof(T);
    const std::size_t kv = k - k % lanes;
    if (mr == 4 && nr == 4) {
        T acc[4][4][lanes] = {};
        for (std::size_t p = 0; p < kv; p += lanes)
            for (std::size_t r = 0; r < 4; ++r) {
                const T* ar = a + r * lda + p;
                for (std::size_t q = 0; q < 4; ++q) {
                    const T* bq = b + q * ldb + p;
#pragma omp simd
                    for (std::size_t l = 0; l < lanes; ++l) acc[r][q][l] += ar[l] * bq[l];
                }
            }
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t q = 0; q < 4; ++q) {
                T s = 0;
                for (std::size_t l = 0; l < lanes; ++l) s += acc[r][q][l];
                for (std::size_t p = kv; p < k; ++p) s += a[r * lda + p] * b[q * ldb + p];
                c[r * ldc + q] += s;
            }
        return;
    }
    for (std::size_t r = 0; r < mr; ++r)
        for (std::size_t q = 0; q < nr; ++q) {
            const T* ar = a + r * lda;
            const T* bq = b + q * ldb;
            T s = 0;
#pragma omp simd reduction(+ : s)
            for (std::size_t p = 0; p < k; ++p) s += ar[p] * bq[p];
            c[r * ldc + q] += s;
        }
}

// C (m x n) += A (m x k) * B^T with B stored n x k.
template <class T>
void gemm_abt_acc(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
                  std::size_t ldb, T* c, std::size_t ldc)
{
    const std::size_t mt = (m + 3) / 4, nt = (n + 3) / 4;
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t t = 0; t < static_cast<std::int64_t>(mt * nt); ++t) {
        const std::size_t i0 = static_cast<std::size_t>(t) / nt * 4, j0 = static_cast<std::size_t>(t) % nt * 4;
        dot_tile(std::min<std::size_t>(4, m - i0), std::min<std::size_t>(4, n - j0), k, a + i0 * lda, lda,
                 b + j0 * ldb, ldb, c + i0 * ldc + j0, ldc);
    }
}

template <class T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst)
{
#pragma omp parallel for schedule(static)
    for (std::int64_t j = 0; j < static_cast<std::int64_t>(cols); ++j)
        for (std::size_t i = 0; i < rows; ++i) dst[j * rows + i] = src[i * cols + j];
}

bool is_pointwise(const ConvGeometry& g)
{
    return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.padding == 0;
}

// One sample: col[(c*kh+ky)*kw+kx][oy*ow+ox]
template <class T>
void im2col(const ConvGeometry& g, const T* in, T* col)
{
    const std::size_t n_cols = g.out_plane();
    const auto H = static_cast<std::int64_t>(g.height), W = static_cast<std::int64_t>(g.width);
    const auto pad = static_cast<std::int64_t>(g.padding);
    const auto stride = static_cast<std::int64_t>(g.stride);
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < static_cast<std::int64_t>(g.in_channels); ++c) {
        const T* plane = in + c * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                T* dst = col + ((c * g.kernel_h + ky) * g.kernel_w + kx) * n_cols;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    T* drow = dst + oy * g.out_w;
                    const std::int64_t iy = static_cast<std::int64_t>(oy) * stride + static_cast<std::int64_t>(ky) - pad;
                    if (iy < 0 || iy >= H) {
                        std::fill(drow, drow + g.out_w, T(0));
                        continue;
                    }
                    const T* srow = plane + iy * W;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::int64_t ix =
                            static_cast<std::int64_t>(ox) * stride + static_cast<std::int64_t>(kx) - pad;
                        drow[ox] = (ix >= 0 && ix < W) ? srow[ix] : T(0);
                    }
                }
            }
    }
}

template <class T>
void col2im_acc(const ConvGeometry& g, const T* col, T* in)
{
    const std::size_t n_cols = g.out_plane();
    const auto H = static_cast<std::int64_t>(g.height), W = static_cast<std::int64_t>(g.width);
    const auto pad = static_cast<std::int64_t>(g.padding);
    const auto stride = static_cast<std::int64_t>(g.stride);
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < static_cast<std::int64_t>(g.in_channels); ++c) {
        T* plane = in + c * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const T* src = col + ((c * g.kernel_h + ky) * g.kernel_w + kx) * n_cols;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::int64_t iy = static_cast<std::int64_t>(oy) * stride + static_cast<std::int64_t>(ky) - pad;
                    if (iy < 0 || iy >= H) continue;
                    T* prow = plane + iy * W;
                    const T* srow = src + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::int64_t ix =
                            static_cast<std::int64_t>(ox) * stride + static_cast<std::int64_t>(kx) - pad;
                        if (ix >= 0 && ix < W) prow[ix] += srow[ox];
                    }
                }
            }
    }
}

} // namespace

template <class T>
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
              T* c, std::size_t ldc)
{
    constexpr std::size_t nr = kNr<T>;
    const auto col_blocks = static_cast<std::int64_t>((n + nr - 1) / nr);
#pragma omp parallel for schedule(static)
    for (std::int64_t jb = 0; jb < col_blocks; ++jb) {
        const std::size_t j0 = static_cast<std::size_t>(jb) * nr;
        const std::size_t nw = std::min(nr, n - j0);
        for (std::size_t i0 = 0; i0 < m; i0 += kMr) {
            const std::size_t mw = std::min(kMr, m - i0);
            if (mw == kMr && nw == nr)
                micro_full(k, a + i0 * lda, lda, b + j0, ldb, c + i0 * ldc + j0, ldc);
            else
                micro_edge(mw, nw, k, a + i0 * lda, lda, b + j0, ldb, c + i0 * ldc + j0, ldc);
        }
    }
}

template <class T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output)
{
    const std::size_t K = g.patch(), N = g.out_plane(), O = g.out_channels;
    const bool pointwise = is_pointwise(g);
    std::vector<T> col(pointwise ? 0 : K * N);
    for (std::size_t n = 0; n < g.batch; ++n) {
        const T* in_n = input + n * g.in_channels * g.height * g.width;
        T* out_n = output + n * O * N;
#pragma omp parallel for schedule(static)
        for (std::int64_t o = 0; o < static_cast<std::int64_t>(O); ++o)
            std::fill(out_n + o * N, out_n + (o + 1) * N, bias ? bias[o] : T(0));
        const T* cols = in_n;
        if (!pointwise) {
            im2col(g, in_n, col.data());
            cols = col.data();
        }
        gemm_acc(O, N, K, weight, K, cols, N, out_n, N);
    }
}

template <class T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_out, const T* weight, T* grad_in)
{
    const std::size_t K = g.patch(), N = g.out_plane(), O = g.out_channels;
    std::vector<T> wt(K * O);
    transpose(O, K, weight, wt.data());
    const bool pointwise = is_pointwise(g);
    std::vector<T> dcol(pointwise ? 0 : K * N);
    for (std::size_t n = 0; n < g.batch; ++n) {
        const T* go_n = grad_out + n * O * N;
        T* gi_n = grad_in + n * g.in_channels * g.height * g.width;
        if (pointwise) {
            gemm_acc(K, N, O, wt.data(), O, go_n, N, gi_n, N);
            continue;
        }
        std::fill(dcol.begin(), dcol.end(), T(0));
        gemm_acc(K, N, O, wt.data(), O, go_n, N, dcol.data(), N);
        col2im_acc(g, dcol.data(), gi_n);
    }
}

template <class T>
void conv2d_backward_weight(const ConvGeometry& g, const T* grad_out, const T* input, T* grad_weight, T* grad_bias)
{
    const std::size_t K = g.patch(), N = g.out_plane(), O = g.out_channels;
    const bool pointwise = is_pointwise(g);
    std::vector<T> col(pointwise ? 0 : K * N);
    for (std::size_t n = 0; n < g.batch; ++n) {
        const T* go_n = grad_out + n * O * N;
        const T* in_n = input + n * g.in_channels * g.height * g.width;
        const T* cols = in_n;
        if (!pointwise) {
            im2col(g, in_n, col.data());
            cols = col.data();
        }
        gemm_abt_acc(O, K, N, go_n, N, cols, N, grad_weight, K);
        if (grad_bias) {
#pragma omp parallel for schedule(static)
            for (std::int64_t o = 0; o < static_cast<std::int64_t>(O); ++o) {
                T s = 0;
                const T* row = go_n + o * N;
                for (std::size_t j = 0; j < N; ++j) s += row[j];
                grad_bias[o] += s;
            }
        }
    }
}

template <class T>
void matmul(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c)
{
    std::fill(c, c + m * n, T(0));
    gemm_acc(m, n, k, a, k, b, n, c, n);
}

template <class T>
void matmul_backward(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, const T* gc, T* ga, T* gb)
{
    if (ga) {
        gemm_abt_acc(m, k, n, gc, n, b, n, ga, k);
    }
    if (gb) {
        std::vector<T> at(k * m);
        transpose(m, k, a, at.data());
        gemm_acc(k, n, m, at.data(), m, gc, n, gb, n);
    }
}

template <class T>
void avg_pool_forward(const PoolGeometry& g, const T* input, T* output)
{
    const T inv = T(1) / static_cast<T>(g.window * g.window);
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(g.planes); ++p)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                T acc = 0;
                for (std::size_t dy = 0; dy < g.window; ++dy) {
                    const T* row = input + (p * g.height + oy * g.stride + dy) * g.width + ox * g.stride;
                    for (std::size_t dx = 0; dx < g.window; ++dx) acc += row[dx];
                }
                output[(p * g.out_h + oy) * g.out_w + ox] = acc * inv;
            }
}

template <class T>
void avg_pool_backward(const PoolGeometry& g, const T* grad_out, T* grad_in)
{
    const T inv = T(1) / static_cast<T>(g.window * g.window);
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(g.planes); ++p)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                const T go = grad_out[(p * g.out_h + oy) * g.out_w + ox] * inv;
                for (std::size_t dy = 0; dy < g.window; ++dy) {
                    T* row = grad_in + (p * g.height + oy * g.stride + dy) * g.width + ox * g.stride;
                    for (std::size_t dx = 0; dx < g.window; ++dx) row[dx] += go;
                }
            }
}

template <class T>
void upsample2x_forward(std::size_t planes, std::size_t h, std::size_t w, const T* input, T* output)
{
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(planes); ++p)
        for (std::size_t y = 0; y < h; ++y) {
            const T* src = input + (p * h + y) * w;
            T* d0 = output + (p * 2 * h + 2 * y) * 2 * w;
            T* d1 = d0 + 2 * w;
            for (std::size_t x = 0; x < w; ++x) {
                d0[2 * x] = d0[2 * x + 1] = src[x];
                d1[2 * x] = d1[2 * x + 1] = src[x];
            }
        }
}

template <class T>
void upsample2x_backward(std::size_t planes, std::size_t h, std::size_t w, const T* grad_out, T* grad_in)
{
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(planes); ++p)
        for (std::size_t y = 0; y < h; ++y) {
            T* dst = grad_in + (p * h + y) * w;
            const T* s0 = grad_out + (p * 2 * h + 2 * y) * 2 * w;
            const T* s1 = s0 + 2 * w;
            for (std::size_t x = 0; x < w; ++x) dst[x] += (s0[2 * x] + s0[2 * x + 1]) + (s1[2 * x] + s1[2 * x + 1]);
        }
}

template <class T>
void instance_norm_forward(std::size_t planes, std::size_t plane_size, const T* input, T min_sigma, T* output,
                           T* inv_sigma, unsigned char* clamped)
{
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(planes); ++p) {
        const T* x = input + p * plane_size;
        T* y = output + p * plane_size;
        T mean = 0;
        for (std::size_t i = 0; i < plane_size; ++i) mean += x[i];
        mean /= static_cast<T>(plane_size);
        T var = 0;
        for (std::size_t i = 0; i < plane_size; ++i) var += (x[i] - mean) * (x[i] - mean);
        var /= static_cast<T>(plane_size);
        T sigma = std::sqrt(var);
        clamped[p] = sigma < min_sigma ? 1 : 0;
        if (clamped[p]) sigma = min_sigma;
        const T inv = T(1) / sigma;
        inv_sigma[p] = inv;
        for (std::size_t i = 0; i < plane_size; ++i) y[i] = (x[i] - mean) * inv;
    }
}

// With y = (x - mean)/sigma: dx = inv * (dy - mean(dy) - y * mean(dy*y)); the last
// term vanishes when sigma was clamped (sigma is then a constant).
template <class T>
void instance_norm_backward(std::size_t planes, std::size_t plane_size, const T* normalized, const T* inv_sigma,
                            const unsigned char* clamped, const T* grad_out, T* grad_in)
{
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(planes); ++p) {
        const T* y = normalized + p * plane_size;
        const T* dy = grad_out + p * plane_size;
        T* dx = grad_in + p * plane_size;
        T mean_dy = 0, mean_dyy = 0;
        for (std::size_t i = 0; i < plane_size; ++i) {
            mean_dy += dy[i];
            mean_dyy += dy[i] * y[i];
        }
        mean_dy /= static_cast<T>(plane_size);
        mean_dyy = clamped[p] ? T(0) : mean_dyy / static_cast<T>(plane_size);
        const T inv = inv_sigma[p];
        for (std::size_t i = 0; i < plane_size; ++i) dx[i] += inv * (dy[i] - mean_dy - y[i] * mean_dyy);
    }
}

#define REDGAN_PARALLEL_INSTANTIATE(T)                                                                          \
    template void gemm_acc<T>(std::size_t, std::size_t, std::size_t, const T*, std::size_t, const T*,           \
                              std::size_t, T*, std::size_t);                                                    \
    template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);                     \
    template void conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);                        \
    template void conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*, T*);                   \
    template void matmul<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);                     \
    template void matmul_backward<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, const T*, T*,   \
                                     T*);                                                                       \
    template void avg_pool_forward<T>(const PoolGeometry&, const T*, T*);                                       \
    template void avg_pool_backward<T>(const PoolGeometry&, const T*, T*);                                      \
    template void upsample2x_forward<T>(std::size_t, std::size_t, std::size_t, const T*, T*);                   \
    template void upsample2x_backward<T>(std::size_t, std::size_t, std::size_t, const T*, T*);                  \
    template void instance_norm_forward<T>(std::size_t, std::size_t, const T*, T, T*, T*, unsigned char*);      \
    template void instance_norm_backward<T>(std::size_t, std::size_t, const T*, const T*, const unsigned char*, \
                                            const T*, T*);

REDGAN_PARALLEL_INSTANTIATE(float)
REDGAN_PARALLEL_INSTANTIATE(double)

} // namespace parallel
} // namespace redgan::kernels
