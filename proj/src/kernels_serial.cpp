#include "redgan/kernels.hpp"

#include <cstdint>
#include <string>

namespace redgan::kernels {

ConvGeometry conv_geometry(const Shape& input, const Shape& weight, std::size_t stride, std::size_t padding)
{
    if (input.size() != 4) throw DimensionError("conv2d input must be NCHW, got " + shape_str(input));
    if (weight.size() != 4) throw DimensionError("conv2d weight must be OIHW, got " + shape_str(weight));
    if (stride == 0) throw DimensionError("conv2d stride must be positive");
    if (input[1] != weight[1])
        throw DimensionError("conv2d channel mismatch: input " + shape_str(input) + " weight " + shape_str(weight));
    ConvGeometry g;
    g.batch = input[0];
    g.in_channels = input[1];
    g.height = input[2];
    g.width = input[3];
    g.out_channels = weight[0];
    g.kernel_h = weight[2];
    g.kernel_w = weight[3];
    g.stride = stride;
    g.padding = padding;
    if (g.height + 2 * padding < g.kernel_h || g.width + 2 * padding < g.kernel_w)
        throw DimensionError("conv2d kernel " + shape_str(weight) + " larger than padded input " + shape_str(input));
    g.out_h = (g.height + 2 * padding - g.kernel_h) / stride + 1;
    g.out_w = (g.width + 2 * padding - g.kernel_w) / stride + 1;
    return g;
}

PoolGeometry pool_geometry(const Shape& input, std::size_t window, std::size_t stride)
{
    if (input.size() != 4) throw DimensionError("avg_pool2d input must be NCHW, got " + shape_str(input));
    if (window == 0 || stride == 0) throw DimensionError("avg_pool2d window and stride must be positive");
    if (window > input[2] || window > input[3])
        throw DimensionError("avg_pool2d window " + std::to_string(window) + " exceeds input " + shape_str(input));
    PoolGeometry g;
    g.planes = input[0] * input[1];
    g.height = input[2];
    g.width = input[3];
    g.window = window;
    g.stride = stride;
    g.out_h = (g.height - window) / stride + 1;
    g.out_w = (g.width - window) / stride + 1;
    return g;
}

namespace serial {

template <class T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output)
{
    const auto H = static_cast<std::int64_t>(g.height), W = static_cast<std::int64_t>(g.width);
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t o = 0; o < g.out_channels; ++o)
            for (std::size_t oy = 0; oy < g.out_h; ++oy)
                for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                    T acc = bias ? bias[o] : T(0);
                    for (std::size_t c = 0; c < g.in_channels; ++c)
                        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                                const auto iy = static_cast<std::int64_t>(oy * g.stride + ky) -
                                                static_cast<std::int64_t>(g.padding);
                                const auto ix = static_cast<std::int64_t>(ox * g.stride + kx) -
                                                static_cast<std::int64_t>(g.padding);
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += input[((n * g.in_channels + c) * g.height + iy) * g.width + ix] *
                                       weight[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
                            }
                    output[((n * g.out_channels + o) * g.out_h + oy) * g.out_w + ox] = acc;
                }
}

template <class T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_out, const T* weight, T* grad_in)
{
    const auto H = static_cast<std::int64_t>(g.height), W = static_cast<std::int64_t>(g.width);
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t o = 0; o < g.out_channels; ++o)
            for (std::size_t oy = 0; oy < g.out_h; ++oy)
                for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                    const T go = grad_out[((n * g.out_channels + o) * g.out_h + oy) * g.out_w + ox];
                    for (std::size_t c = 0; c < g.in_channels; ++c)
                        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                                const auto iy = static_cast<std::int64_t>(oy * g.stride + ky) -
                                                static_cast<std::int64_t>(g.padding);
                                const auto ix = static_cast<std::int64_t>(ox * g.stride + kx) -
                                                static_cast<std::int64_t>(g.padding);
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                grad_in[((n * g.in_channels + c) * g.height + iy) * g.width + ix] +=
                                    go * weight[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
                            }
                }
}

template <class T>
void conv2d_backward_weight(const ConvGeometry& g, const T* grad_out, const T* input, T* grad_weight, T* grad_bias)
{
    const auto H = static_cast<std::int64_t>(g.height), W = static_cast<std::int64_t>(g.width);
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t o = 0; o < g.out_channels; ++o)
            for (std::size_t oy = 0; oy < g.out_h; ++oy)
                for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                    const T go = grad_out[((n * g.out_channels + o) * g.out_h + oy) * g.out_w + ox];
                    if (grad_bias) grad_bias[o] += go;
                    for (std::size_t c = 0; c < g.in_channels; ++c)
                        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                                const auto iy = static_cast<std::int64_t>(oy * g.stride + ky) -
                                                static_cast<std::int64_t>(g.padding);
                                const auto ix = static_cast<std::int64_t>(ox * g.stride + kx) -
                                                static_cast<std::int64_t>(g.padding);
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                grad_weight[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx] +=
                                    go * input[((n * g.in_channels + c) * g.height + iy) * g.width + ix];
                            }
                }
}

template <class T>
void matmul(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c)
{
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            T acc = 0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
}

template <class T>
void avg_pool_forward(const PoolGeometry& g, const T* input, T* output)
{
    const T inv = T(1) / static_cast<T>(g.window * g.window);
    for (std::size_t p = 0; p < g.planes; ++p)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                T acc = 0;
                for (std::size_t dy = 0; dy < g.window; ++dy)
                    for (std::size_t dx = 0; dx < g.window; ++dx)
                        acc += input[(p * g.height + oy * g.stride + dy) * g.width + ox * g.stride + dx];
                output[(p * g.out_h + oy) * g.out_w + ox] = acc * inv;
            }
}

template <class T>
void avg_pool_backward(const PoolGeometry& g, const T* grad_out, T* grad_in)
{
    const T inv = T(1) / static_cast<T>(g.window * g.window);
    for (std::size_t p = 0; p < g.planes; ++p)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                const T go = grad_out[(p * g.out_h + oy) * g.out_w + ox] * inv;
                for (std::size_t dy = 0; dy < g.window; ++dy)
                    for (std::size_t dx = 0; dx < g.window; ++dx)
                        grad_in[(p * g.height + oy * g.stride + dy) * g.width + ox * g.stride + dx] += go;
            }
}

template <class T>
void upsample2x_forward(std::size_t planes, std::size_t h, std::size_t w, const T* input, T* output)
{
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < 2 * h; ++y)
            for (std::size_t x = 0; x < 2 * w; ++x)
                output[(p * 2 * h + y) * 2 * w + x] = input[(p * h + y / 2) * w + x / 2];
}

template <class T>
void upsample2x_backward(std::size_t planes, std::size_t h, std::size_t w, const T* grad_out, T* grad_in)
{
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < 2 * h; ++y)
            for (std::size_t x = 0; x < 2 * w; ++x)
                grad_in[(p * h + y / 2) * w + x / 2] += grad_out[(p * 2 * h + y) * 2 * w + x];
}

#define REDGAN_SERIAL_INSTANTIATE(T)                                                                      \
    template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);               \
    template void conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);                  \
    template void conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*, T*);             \
    template void matmul<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);               \
    template void avg_pool_forward<T>(const PoolGeometry&, const T*, T*);                                 \
    template void avg_pool_backward<T>(const PoolGeometry&, const T*, T*);                                \
    template void upsample2x_forward<T>(std::size_t, std::size_t, std::size_t, const T*, T*);             \
    template void upsample2x_backward<T>(std::size_t, std::size_t, std::size_t, const T*, T*);

REDGAN_SERIAL_INSTANTIATE(float)
REDGAN_SERIAL_INSTANTIATE(double)

} // namespace serial
} // namespace redgan::kernels
