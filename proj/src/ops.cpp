#include <algorithm>
#include <cmath>
#include <limits>

#include "redgan/autodiff.hpp"
#include "redgan/kernels.hpp"

namespace redgan {

namespace {

template <class T>
Var<T> finish(OpKind op, Tensor<T> value, std::initializer_list<Var<T>> inputs, typename Tape<T>::BackwardFn fn)
{
    require_finite(value, op_name(op));
    Var<T> out(std::move(value));
    Tape<T>* tape = active_tape<T>();
    if (!tape) return out;
    bool needed = false;
    for (const auto& v : inputs) needed = needed || (v.defined() && v.requires_grad());
    if (!needed) return out;
    std::vector<std::shared_ptr<Node<T>>> nodes;
    nodes.reserve(inputs.size());
    for (const auto& v : inputs) nodes.push_back(v.defined() ? v.node() : std::make_shared<Node<T>>());
    tape->record(op, std::move(nodes), out.node(), std::move(fn));
    return out;
}

enum class Broadcast { None, Scalar };

template <class T>
Broadcast binary_mode(const Var<T>& a, const Var<T>& b, const char* what)
{
    if (a.shape() == b.shape()) return Broadcast::None;
    if (b.numel() == 1) return Broadcast::Scalar;
    throw DimensionError(std::string(what) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
}

// Unary elementwise op with derivative expressed through (x, y).
template <class T, class F, class D>
Var<T> unary(OpKind op, const Var<T>& a, F f, D dfdx)
{
    Tensor<T> out(a.shape());
    const auto& x = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
    return finish<T>(op, std::move(out), {a}, [dfdx](const BackwardContext<T>& ctx) {
        Tensor<T>* ga = ctx.grad_in(0);
        if (!ga) return;
        const auto& xv = ctx.in(0);
        const auto& yv = ctx.output.value;
        for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += ctx.grad_out[i] * dfdx(xv[i], yv[i]);
    });
}

struct AxisSplit {
    std::size_t outer, channels, inner;
};

AxisSplit split_axis1(const Shape& s, const char* what)
{
    if (s.size() < 2) throw DimensionError(std::string(what) + " needs rank >= 2, got " + shape_str(s));
    std::size_t inner = 1;
    for (std::size_t i = 2; i < s.size(); ++i) inner *= s[i];
    return {s[0], s[1], inner};
}

} // namespace

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b)
{
    const Broadcast mode = binary_mode(a, b, "add");
    Tensor<T> out = a.value();
    if (mode == Broadcast::None)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    else
        for (auto& v : out.data()) v += b.value()[0];
    return finish<T>(OpKind::Add, std::move(out), {a, b}, [mode](const BackwardContext<T>& ctx) {
        if (auto* ga = ctx.grad_in(0))
            for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += ctx.grad_out[i];
        if (auto* gb = ctx.grad_in(1)) {
            if (mode == Broadcast::None)
                for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += ctx.grad_out[i];
            else {
                T s = 0;
                for (T g : ctx.grad_out.data()) s += g;
                (*gb)[0] += s;
            }
        }
    });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b)
{
    const Broadcast mode = binary_mode(a, b, "sub");
    Tensor<T> out = a.value();
    if (mode == Broadcast::None)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    else
        for (auto& v : out.data()) v -= b.value()[0];
    return finish<T>(OpKind::Sub, std::move(out), {a, b}, [mode](const BackwardContext<T>& ctx) {
        if (auto* ga = ctx.grad_in(0))
            for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += ctx.grad_out[i];
        if (auto* gb = ctx.grad_in(1)) {
            if (mode == Broadcast::None)
                for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] -= ctx.grad_out[i];
            else {
                T s = 0;
                for (T g : ctx.grad_out.data()) s += g;
                (*gb)[0] -= s;
            }
        }
    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b)
{
    const Broadcast mode = binary_mode(a, b, "mul");
    Tensor<T> out = a.value();
    if (mode == Broadcast::None)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    else
        for (auto& v : out.data()) v *= b.value()[0];
    return finish<T>(OpKind::Mul, std::move(out), {a, b}, [mode](const BackwardContext<T>& ctx) {
        const auto& av = ctx.in(0);
        const auto& bv = ctx.in(1);
        if (auto* ga = ctx.grad_in(0)) {
            if (mode == Broadcast::None)
                for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += ctx.grad_out[i] * bv[i];
            else
                for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += ctx.grad_out[i] * bv[0];
        }
        if (auto* gb = ctx.grad_in(1)) {
            if (mode == Broadcast::None)
                for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += ctx.grad_out[i] * av[i];
            else {
                T s = 0;
                for (std::size_t i = 0; i < av.size(); ++i) s += ctx.grad_out[i] * av[i];
                (*gb)[0] += s;
            }
        }
    });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b)
{
    const Broadcast mode = binary_mode(a, b, "div");
    Tensor<T> out = a.value();
    if (mode == Broadcast::None)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b.value()[i];
    else
        for (auto& v : out.data()) v /= b.value()[0];
    return finish<T>(OpKind::Div, std::move(out), {a, b}, [mode](const BackwardContext<T>& ctx) {
        const auto& av = ctx.in(0);
        const auto& bv = ctx.in(1);
        auto bat = [&](std::size_t i) { return mode == Broadcast::None ? bv[i] : bv[0]; };
        if (auto* ga = ctx.grad_in(0))
            for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += ctx.grad_out[i] / bat(i);
        if (auto* gb = ctx.grad_in(1)) {
            if (mode == Broadcast::None)
                for (std::size_t i = 0; i < gb->size(); ++i)
                    (*gb)[i] -= ctx.grad_out[i] * av[i] / (bv[i] * bv[i]);
            else {
                T s = 0;
                for (std::size_t i = 0; i < av.size(); ++i) s += ctx.grad_out[i] * av[i];
                (*gb)[0] -= s / (bv[0] * bv[0]);
            }
        }
    });
}

template <class T>
Var<T> scale(const Var<T>& a, T s)
{
    Tensor<T> out = a.value();
    for (auto& v : out.data()) v *= s;
    return finish<T>(OpKind::Scale, std::move(out), {a}, [s](const BackwardContext<T>& ctx) {
        if (auto* ga = ctx.grad_in(0))
            for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += s * ctx.grad_out[i];
    });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s)
{
    Tensor<T> out = a.value();
    for (auto& v : out.data()) v += s;
    return finish<T>(OpKind::AddScalar, std::move(out), {a}, [](const BackwardContext<T>& ctx) {
        if (auto* ga = ctx.grad_in(0))
            for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += ctx.grad_out[i];
    });
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b)
{
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor<T> out(Shape{m, n});
    kernels::parallel::matmul(m, k, n, a.value().ptr(), b.value().ptr(), out.ptr());
    return finish<T>(OpKind::MatMul, std::move(out), {a, b}, [m, k, n](const BackwardContext<T>& ctx) {
        Tensor<T>* ga = ctx.grad_in(0);
        Tensor<T>* gb = ctx.grad_in(1);
        kernels::parallel::matmul_backward(m, k, n, ctx.in(0).ptr(), ctx.in(1).ptr(), ctx.grad_out.ptr(),
                                           ga ? ga->ptr() : nullptr, gb ? gb->ptr() : nullptr);
    });
}

template <class T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, std::size_t stride, std::size_t padding)
{
    const kernels::ConvGeometry g = kernels::conv_geometry(input.shape(), weight.shape(), stride, padding);
    if (bias.defined() && bias.numel() != g.out_channels)
        throw DimensionError("conv2d bias length " + std::to_string(bias.numel()) + " != out channels " +
                             std::to_string(g.out_channels));
    Tensor<T> out(Shape{g.batch, g.out_channels, g.out_h, g.out_w});
    kernels::parallel::conv2d_forward(g, input.value().ptr(), weight.value().ptr(),
                                      bias.defined() ? bias.value().ptr() : nullptr, out.ptr());
    return finish<T>(OpKind::Conv2d, std::move(out), {input, weight, bias}, [g](const BackwardContext<T>& ctx) {
        if (auto* gi = ctx.grad_in(0))
            kernels::parallel::conv2d_backward_input(g, ctx.grad_out.ptr(), ctx.in(1).ptr(), gi->ptr());
        Tensor<T>* gw = ctx.grad_in(1);
        Tensor<T>* gb = ctx.grad_in(2);
        if (gw)
            kernels::parallel::conv2d_backward_weight(g, ctx.grad_out.ptr(), ctx.in(0).ptr(), gw->ptr(),
                                                      gb ? gb->ptr() : nullptr);
        else if (gb) {
            const std::size_t plane = g.out_plane();
            for (std::size_t n = 0; n < g.batch; ++n)
                for (std::size_t o = 0; o < g.out_channels; ++o) {
                    T s = 0;
                    const T* row = ctx.grad_out.ptr() + (n * g.out_channels + o) * plane;
                    for (std::size_t j = 0; j < plane; ++j) s += row[j];
                    (*gb)[o] += s;
                }
        }
    });
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape)
{
    Tensor<T> out = a.value().reshaped(std::move(shape));
    return finish<T>(OpKind::Reshape, std::move(out), {a}, [](const BackwardContext<T>& ctx) {
        if (auto* ga = ctx.grad_in(0))
            for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += ctx.grad_out[i];
    });
}

template <class T>
Var<T> transpose(const Var<T>& a)
{
    if (a.shape().size() != 2) throw DimensionError("transpose needs a matrix, got " + shape_str(a.shape()));
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    Tensor<T> out(Shape{c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.value()[i * c + j];
    return finish<T>(OpKind::Transpose, std::move(out), {a}, [r, c](const BackwardContext<T>& ctx) {
        if (auto* ga = ctx.grad_in(0))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += ctx.grad_out[j * r + i];
    });
}

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts)
{
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    const Shape& s0 = parts[0].shape();
    const AxisSplit base = split_axis1(s0, "concat");
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == s0.size() && s[0] == s0[0];
        for (std::size_t i = 2; ok && i < s.size(); ++i) ok = s[i] == s0[i];
        if (!ok) throw DimensionError("concat: " + shape_str(s) + " incompatible with " + shape_str(s0));
        widths.push_back(s[1]);
        total += s[1];
    }
    Shape out_shape = s0;
    out_shape[1] = total;
    Tensor<T> out(out_shape);
    const std::size_t inner = base.inner;
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const T* src = parts[k].value().ptr();
        for (std::size_t n = 0; n < base.outer; ++n)
            std::copy(src + n * widths[k] * inner, src + (n + 1) * widths[k] * inner,
                      out.ptr() + (n * total + offset) * inner);
        offset += widths[k];
    }

    require_finite(out, "concat");
    Var<T> result(std::move(out));
    Tape<T>* tape = active_tape<T>();
    bool needed = false;
    for (const auto& p : parts) needed = needed || p.requires_grad();
    if (!tape || !needed) return result;
    std::vector<std::shared_ptr<Node<T>>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tape->record(OpKind::Concat, std::move(nodes), result.node(),
                 [widths, total, inner, outer = base.outer](const BackwardContext<T>& ctx) {
                     std::size_t off = 0;
                     for (std::size_t k = 0; k < widths.size(); ++k) {
                         if (auto* g = ctx.grad_in(k)) {
                             for (std::size_t n = 0; n < outer; ++n) {
                                 const T* src = ctx.grad_out.ptr() + (n * total + off) * inner;
                                 T* dst = g->ptr() + n * widths[k] * inner;
                                 for (std::size_t i = 0; i < widths[k] * inner; ++i) dst[i] += src[i];
                             }
                         }
                         off += widths[k];
                     }
                 });
    return result;
}

template <class T>
Var<T> relu(const Var<T>& a)
{
    return unary<T>(
        OpKind::Relu, a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope)
{
    return unary<T>(
        OpKind::LeakyRelu, a, [slope](T x) { return x > T(0) ? x : slope * x; },
        [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <class T>
Var<T> tanh(const Var<T>& a)
{
    return unary<T>(
        OpKind::Tanh, a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> sigmoid(const Var<T>& a)
{
    return unary<T>(
        OpKind::Sigmoid, a,
        [](T x) { return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x)); },
        [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> log(const Var<T>& a)
{
    return unary<T>(
        OpKind::Log, a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Var<T> exp(const Var<T>& a)
{
    return unary<T>(
        OpKind::Exp, a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Var<T> abs(const Var<T>& a)
{
    return unary<T>(
        OpKind::Abs, a, [](T x) { return std::abs(x); },
        [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <class T>
Var<T> softmax_channels(const Var<T>& a)
{
    const AxisSplit s = split_axis1(a.shape(), "softmax");
    Tensor<T> out(a.shape());
    const T* x = a.value().ptr();
    for (std::size_t n = 0; n < s.outer; ++n)
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = n * s.channels * s.inner + i;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t c = 0; c < s.channels; ++c) mx = std::max(mx, x[base + c * s.inner]);
            T z = 0;
            for (std::size_t c = 0; c < s.channels; ++c) {
                const T e = std::exp(x[base + c * s.inner] - mx);
                out[base + c * s.inner] = e;
                z += e;
            }
            for (std::size_t c = 0; c < s.channels; ++c) out[base + c * s.inner] /= z;
        }
    return finish<T>(OpKind::Softmax, std::move(out), {a}, [s](const BackwardContext<T>& ctx) {
        Tensor<T>* ga = ctx.grad_in(0);
        if (!ga) return;
        const auto& y = ctx.output.value;
        const auto& g = ctx.grad_out;
        for (std::size_t n = 0; n < s.outer; ++n)
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = n * s.channels * s.inner + i;
                T dot = 0;
                for (std::size_t c = 0; c < s.channels; ++c) dot += g[base + c * s.inner] * y[base + c * s.inner];
                for (std::size_t c = 0; c < s.channels; ++c) {
                    const std::size_t j = base + c * s.inner;
                    (*ga)[j] += y[j] * (g[j] - dot);
                }
            }
    });
}

template <class T>
Var<T> log_softmax_channels(const Var<T>& a)
{
    const AxisSplit s = split_axis1(a.shape(), "log_softmax");
    Tensor<T> out(a.shape());
    const T* x = a.value().ptr();
    for (std::size_t n = 0; n < s.outer; ++n)
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = n * s.channels * s.inner + i;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t c = 0; c < s.channels; ++c) mx = std::max(mx, x[base + c * s.inner]);
            T z = 0;
            for (std::size_t c = 0; c < s.channels; ++c) z += std::exp(x[base + c * s.inner] - mx);
            const T lz = mx + std::log(z);
            for (std::size_t c = 0; c < s.channels; ++c) out[base + c * s.inner] = x[base + c * s.inner] - lz;
        }
    return finish<T>(OpKind::LogSoftmax, std::move(out), {a}, [s](const BackwardContext<T>& ctx) {
        Tensor<T>* ga = ctx.grad_in(0);
        if (!ga) return;
        const auto& y = ctx.output.value;
        const auto& g = ctx.grad_out;
        for (std::size_t n = 0; n < s.outer; ++n)
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = n * s.channels * s.inner + i;
                T gs = 0;
                for (std::size_t c = 0; c < s.channels; ++c) gs += g[base + c * s.inner];
                for (std::size_t c = 0; c < s.channels; ++c) {
                    const std::size_t j = base + c * s.inner;
                    (*ga)[j] += g[j] - std::exp(y[j]) * gs;
                }
            }
    });
}

template <class T>
Var<T> mean(const Var<T>& a)
{
    if (a.numel() == 0) throw DimensionError("mean of empty tensor");
    T s = 0;
    for (T v : a.value().data()) s += v;
    const T n = static_cast<T>(a.numel());
    return finish<T>(OpKind::Mean, Tensor<T>(Shape{1}, s / n), {a}, [n](const BackwardContext<T>& ctx) {
        if (auto* ga = ctx.grad_in(0)) {
            const T g = ctx.grad_out[0] / n;
            for (auto& v : ga->data()) v += g;
        }
    });
}

template <class T>
Var<T> sum(const Var<T>& a)
{
    T s = 0;
    for (T v : a.value().data()) s += v;
    return finish<T>(OpKind::Sum, Tensor<T>(Shape{1}, s), {a}, [](const BackwardContext<T>& ctx) {
        if (auto* ga = ctx.grad_in(0)) {
            const T g = ctx.grad_out[0];
            for (auto& v : ga->data()) v += g;
        }
    });
}

template <class T>
Var<T> channel_sum(const Var<T>& a)
{
    const AxisSplit s = split_axis1(a.shape(), "channel_sum");
    Tensor<T> out(Shape{s.channels});
    const T* x = a.value().ptr();
    for (std::size_t n = 0; n < s.outer; ++n)
        for (std::size_t c = 0; c < s.channels; ++c) {
            T acc = 0;
            const T* p = x + (n * s.channels + c) * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) acc += p[i];
            out[c] += acc;
        }
    return finish<T>(OpKind::ChannelSum, std::move(out), {a}, [s](const BackwardContext<T>& ctx) {
        Tensor<T>* ga = ctx.grad_in(0);
        if (!ga) return;
        for (std::size_t n = 0; n < s.outer; ++n)
            for (std::size_t c = 0; c < s.channels; ++c) {
                T* p = ga->ptr() + (n * s.channels + c) * s.inner;
                for (std::size_t i = 0; i < s.inner; ++i) p[i] += ctx.grad_out[c];
            }
    });
}

template <class T>
Var<T> avg_pool2d(const Var<T>& a, std::size_t window, std::size_t stride)
{
    const kernels::PoolGeometry g = kernels::pool_geometry(a.shape(), window, stride);
    Tensor<T> out(Shape{a.shape()[0], a.shape()[1], g.out_h, g.out_w});
    kernels::parallel::avg_pool_forward(g, a.value().ptr(), out.ptr());
    return finish<T>(OpKind::AvgPool, std::move(out), {a}, [g](const BackwardContext<T>& ctx) {
        if (auto* ga = ctx.grad_in(0)) kernels::parallel::avg_pool_backward(g, ctx.grad_out.ptr(), ga->ptr());
    });
}

template <class T>
Var<T> upsample_nearest2x(const Var<T>& a)
{
    const Shape& s = a.shape();
    if (s.size() != 4 || s[2] == 0 || s[3] == 0)
        throw DimensionError("upsample_nearest2x needs non-empty NCHW, got " + shape_str(s));
    const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
    Tensor<T> out(Shape{s[0], s[1], 2 * h, 2 * w});
    kernels::parallel::upsample2x_forward(planes, h, w, a.value().ptr(), out.ptr());
    return finish<T>(OpKind::Upsample, std::move(out), {a}, [planes, h, w](const BackwardContext<T>& ctx) {
        if (auto* ga = ctx.grad_in(0))
            kernels::parallel::upsample2x_backward(planes, h, w, ctx.grad_out.ptr(), ga->ptr());
    });
}

template <class T>
Var<T> embedding(const Var<T>& table, std::span<const int> ids)
{
    if (table.shape().size() != 2) throw DimensionError("embedding table must be K x E");
    const std::size_t K = table.shape()[0], E = table.shape()[1];
    std::vector<int> idv(ids.begin(), ids.end());
    for (int id : idv)
        if (id < 0 || static_cast<std::size_t>(id) >= K)
            throw DomainError("class id " + std::to_string(id) + " outside [0, " + std::to_string(K) + ")");
    Tensor<T> out(Shape{idv.size(), E});
    for (std::size_t n = 0; n < idv.size(); ++n)
        std::copy_n(table.value().ptr() + static_cast<std::size_t>(idv[n]) * E, E, out.ptr() + n * E);
    return finish<T>(OpKind::Embedding, std::move(out), {table}, [idv, E](const BackwardContext<T>& ctx) {
        Tensor<T>* gt = ctx.grad_in(0);
        if (!gt) return;
        for (std::size_t n = 0; n < idv.size(); ++n)
            for (std::size_t e = 0; e < E; ++e)
                (*gt)[static_cast<std::size_t>(idv[n]) * E + e] += ctx.grad_out[n * E + e];
    });
}

template <class T>
Var<T> instance_norm(const Var<T>& a, T min_sigma)
{
    const Shape& s = a.shape();
    if (s.size() != 4) throw DimensionError("instance_norm needs NCHW, got " + shape_str(s));
    const std::size_t planes = s[0] * s[1], plane = s[2] * s[3];
    Tensor<T> out(s);
    auto inv_sigma = std::make_shared<std::vector<T>>(planes);
    auto clamped = std::make_shared<std::vector<unsigned char>>(planes);
    kernels::parallel::instance_norm_forward(planes, plane, a.value().ptr(), min_sigma, out.ptr(), inv_sigma->data(),
                                             clamped->data());
    return finish<T>(OpKind::InstanceNorm, std::move(out), {a},
                     [planes, plane, inv_sigma, clamped](const BackwardContext<T>& ctx) {
                         if (auto* ga = ctx.grad_in(0))
                             kernels::parallel::instance_norm_backward(planes, plane, ctx.output.value.ptr(),
                                                                       inv_sigma->data(), clamped->data(),
                                                                       ctx.grad_out.ptr(), ga->ptr());
                     });
}

template <class T>
Var<T> bias_add(const Var<T>& a, const Var<T>& bias)
{
    const AxisSplit s = split_axis1(a.shape(), "bias_add");
    if (bias.numel() != s.channels)
        throw DimensionError("bias_add: bias length " + std::to_string(bias.numel()) + " vs channels " +
                             std::to_string(s.channels));
    Tensor<T> out = a.value();
    for (std::size_t n = 0; n < s.outer; ++n)
        for (std::size_t c = 0; c < s.channels; ++c) {
            T* p = out.ptr() + (n * s.channels + c) * s.inner;
            const T b = bias.value()[c];
            for (std::size_t i = 0; i < s.inner; ++i) p[i] += b;
        }
    return finish<T>(OpKind::BiasAdd, std::move(out), {a, bias}, [s](const BackwardContext<T>& ctx) {
        if (auto* ga = ctx.grad_in(0))
            for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += ctx.grad_out[i];
        if (auto* gb = ctx.grad_in(1))
            for (std::size_t n = 0; n < s.outer; ++n)
                for (std::size_t c = 0; c < s.channels; ++c) {
                    const T* p = ctx.grad_out.ptr() + (n * s.channels + c) * s.inner;
                    T acc = 0;
                    for (std::size_t i = 0; i < s.inner; ++i) acc += p[i];
                    (*gb)[c] += acc;
                }
    });
}

#define REDGAN_OPS_INSTANTIATE(T)                                                                      \
    template Var<T> add<T>(const Var<T>&, const Var<T>&);                                              \
    template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                              \
    template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                              \
    template Var<T> div<T>(const Var<T>&, const Var<T>&);                                              \
    template Var<T> scale<T>(const Var<T>&, T);                                                        \
    template Var<T> add_scalar<T>(const Var<T>&, T);                                                   \
    template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                           \
    template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t); \
    template Var<T> reshape<T>(const Var<T>&, Shape);                                                  \
    template Var<T> transpose<T>(const Var<T>&);                                                       \
    template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                                    \
    template Var<T> relu<T>(const Var<T>&);                                                            \
    template Var<T> leaky_relu<T>(const Var<T>&, T);                                                   \
    template Var<T> tanh<T>(const Var<T>&);                                                            \
    template Var<T> sigmoid<T>(const Var<T>&);                                                         \
    template Var<T> log<T>(const Var<T>&);                                                             \
    template Var<T> exp<T>(const Var<T>&);                                                             \
    template Var<T> abs<T>(const Var<T>&);                                                             \
    template Var<T> softmax_channels<T>(const Var<T>&);                                                \
    template Var<T> log_softmax_channels<T>(const Var<T>&);                                            \
    template Var<T> mean<T>(const Var<T>&);                                                            \
    template Var<T> sum<T>(const Var<T>&);                                                             \
    template Var<T> channel_sum<T>(const Var<T>&);                                                     \
    template Var<T> avg_pool2d<T>(const Var<T>&, std::size_t, std::size_t);                            \
    template Var<T> upsample_nearest2x<T>(const Var<T>&);                                              \
    template Var<T> embedding<T>(const Var<T>&, std::span<const int>);                                 \
    template Var<T> instance_norm<T>(const Var<T>&, T);                                                \
    template Var<T> bias_add<T>(const Var<T>&, const Var<T>&);

REDGAN_OPS_INSTANTIATE(float)
REDGAN_OPS_INSTANTIATE(double)

} // namespace redgan
