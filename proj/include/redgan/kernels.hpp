#pragma once

// Dense numeric kernels in two flavours:
//   serial::    straightforward loops, kept as the reference for tests and
//               the benchmark;
//   parallel::  OpenMP kernels used by the autodiff ops (im2col + blocked GEMM
//               for convolutions).
// Every parallel kernel partitions its outputs so that each element is
// produced by exactly one thread in a fixed order: results do not depend on
// the thread count.
//
// Backward kernels accumulate (+=) into their gradient buffers.

#include <cstddef>

#include "redgan/tensor.hpp"

namespace redgan::kernels {

struct ConvGeometry {
    std::size_t batch = 0, in_channels = 0, height = 0, width = 0;
    std::size_t out_channels = 0, kernel_h = 0, kernel_w = 0;
    std::size_t stride = 1, padding = 0;
    std::size_t out_h = 0, out_w = 0;

    std::size_t patch() const { return in_channels * kernel_h * kernel_w; }
    std::size_t out_plane() const { return out_h * out_w; }
};

/// Validates shapes (NCHW input, OIHW weight) and derives the output extent.
ConvGeometry conv_geometry(const Shape& input, const Shape& weight, std::size_t stride, std::size_t padding);

struct PoolGeometry {
    std::size_t planes = 0, height = 0, width = 0, window = 0, stride = 0, out_h = 0, out_w = 0;
};

PoolGeometry pool_geometry(const Shape& input, std::size_t window, std::size_t stride);

namespace serial {

template <class T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output);
template <class T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_out, const T* weight, T* grad_in);
template <class T>
void conv2d_backward_weight(const ConvGeometry& g, const T* grad_out, const T* input, T* grad_weight,
                            T* grad_bias);

/// c = a(m x k) * b(k x n)
template <class T>
void matmul(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c);

template <class T>
void avg_pool_forward(const PoolGeometry& g, const T* input, T* output);
template <class T>
void avg_pool_backward(const PoolGeometry& g, const T* grad_out, T* grad_in);

template <class T>
void upsample2x_forward(std::size_t planes, std::size_t h, std::size_t w, const T* input, T* output);
template <class T>
void upsample2x_backward(std::size_t planes, std::size_t h, std::size_t w, const T* grad_out, T* grad_in);

} // namespace serial

namespace parallel {

/// c += a(m x k, row stride lda) * b(k x n, row stride ldb)
template <class T>
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
              std::size_t ldb, T* c, std::size_t ldc);

template <class T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output);
template <class T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_out, const T* weight, T* grad_in);
template <class T>
void conv2d_backward_weight(const ConvGeometry& g, const T* grad_out, const T* input, T* grad_weight,
                            T* grad_bias);

template <class T>
void matmul(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c);
/// ga += gc * b^T ; gb += a^T * gc   (either output may be null)
template <class T>
void matmul_backward(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, const T* gc, T* ga,
                     T* gb);

template <class T>
void avg_pool_forward(const PoolGeometry& g, const T* input, T* output);
template <class T>
void avg_pool_backward(const PoolGeometry& g, const T* grad_out, T* grad_in);

template <class T>
void upsample2x_forward(std::size_t planes, std::size_t h, std::size_t w, const T* input, T* output);
template <class T>
void upsample2x_backward(std::size_t planes, std::size_t h, std::size_t w, const T* grad_out, T* grad_in);

/// Per-plane standardisation; writes normalised values and per-plane 1/sigma.
/// sigma is clamped below at `min_sigma`; clamped planes report clamped=1.
template <class T>
void instance_norm_forward(std::size_t planes, std::size_t plane_size, const T* input, T min_sigma, T* output,
                           T* inv_sigma, unsigned char* clamped);
template <class T>
void instance_norm_backward(std::size_t planes, std::size_t plane_size, const T* normalized, const T* inv_sigma,
                            const unsigned char* clamped, const T* grad_out, T* grad_in);

} // namespace parallel

/// Caps the OpenMP worker count used by the parallel kernels (0 = runtime default).
void set_num_threads(int n);
int num_threads();

} // namespace redgan::kernels
