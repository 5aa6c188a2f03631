#pragma once

// Tape-based reverse-mode automatic differentiation.
//
// Operations record onto the tape that is active on the calling thread (see
// TapeScope) whenever at least one input requires a gradient. Without an
// active tape, ops only compute values, which is how inference and frozen
// passes run.

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "redgan/tensor.hpp"

namespace redgan {

enum class OpKind {
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    AddScalar,
    MatMul,
    Conv2d,
    Reshape,
    Transpose,
    Concat,
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
    Softmax,
    LogSoftmax,
    Log,
    Exp,
    Abs,
    Mean,
    Sum,
    ChannelSum,
    AvgPool,
    Upsample,
    Embedding,
    InstanceNorm,
    BiasAdd,
    Count_
};

const char* op_name(OpKind op);
std::optional<OpKind> op_from_name(std::string_view name);

/// Test-harness hook: scales the incoming gradient of one op kind by
/// (1 + relative_error) during backward, so gradient checks must fail.
namespace fault {
void inject(OpKind op, double relative_error = 1e-2);
void clear();
} // namespace fault

template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad; // empty until first accumulation
    bool requires_grad = false;
    bool is_leaf = true;
    const void* tape = nullptr; // owning tape for recorded outputs
};

template <class T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Tensor<T>& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t numel() const { return node_->value.size(); }
    T item() const;

    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf; }
    void set_requires_grad(bool on);

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    const Tensor<T>& grad() const;
    void zero_grad() { node_->grad = Tensor<T>(); }

    /// Leaf storage, for optimizers and initialisers.
    Tensor<T>& mutable_value();

    /// New constant leaf holding a copy of the value.
    Var detach() const { return Var(node_->value, false); }

    const std::shared_ptr<Node<T>>& node() const { return node_; }
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<Node<T>> node_;
};

template <class T>
struct BackwardContext {
    const Tensor<T>& grad_out;
    const Node<T>& output;
    std::span<const std::shared_ptr<Node<T>>> inputs;

    const Tensor<T>& in(std::size_t i) const { return inputs[i]->value; }
    /// Zero-initialised gradient buffer for input i, or nullptr when input i
    /// does not require a gradient.
    Tensor<T>* grad_in(std::size_t i) const;
};

template <class T>
class Tape {
public:
    using BackwardFn = std::function<void(const BackwardContext<T>&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(OpKind op, std::vector<std::shared_ptr<Node<T>>> inputs, const std::shared_ptr<Node<T>>& output,
                BackwardFn fn);

    /// Populates d(seed)/d(leaf) on every reachable leaf that requires a
    /// gradient. Leaf gradients accumulate across calls.
    void backward(const Var<T>& seed);

    std::size_t size() const noexcept { return entries_.size(); }
    void clear() { entries_.clear(); }

private:
    struct Entry {
        OpKind op;
        std::vector<std::shared_ptr<Node<T>>> inputs;
        std::shared_ptr<Node<T>> output;
        BackwardFn fn;
    };
    std::vector<Entry> entries_;
};

template <class T>
Tape<T>*& active_tape();

/// Makes `tape` the active tape of this thread for the scope's lifetime.
template <class T>
class TapeScope {
public:
    explicit TapeScope(Tape<T>& tape) : previous_(active_tape<T>()) { active_tape<T>() = &tape; }
    ~TapeScope() { active_tape<T>() = previous_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<T>* previous_;
};

/// Suspends recording for the scope's lifetime.
template <class T>
class NoGradScope {
public:
    NoGradScope() : previous_(active_tape<T>()) { active_tape<T>() = nullptr; }
    ~NoGradScope() { active_tape<T>() = previous_; }
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape<T>* previous_;
};

// ---------------------------------------------------------------------------
// Primitives. Binary elementwise ops accept equal shapes, or a single-element
// right operand which is broadcast.

template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> div(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& a, T s);
template <class T> Var<T> add_scalar(const Var<T>& a, T s);

/// (m x k) * (k x n)
template <class T> Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// NCHW input, OIHW weight, optional bias of length O (pass an undefined Var).
template <class T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, std::size_t stride, std::size_t padding);

template <class T> Var<T> reshape(const Var<T>& a, Shape shape);
template <class T> Var<T> transpose(const Var<T>& a);
/// Concatenation along axis 1.
template <class T> Var<T> concat_channels(const std::vector<Var<T>>& parts);

template <class T> Var<T> relu(const Var<T>& a);
template <class T> Var<T> leaky_relu(const Var<T>& a, T slope = T(0.2));
template <class T> Var<T> tanh(const Var<T>& a);
template <class T> Var<T> sigmoid(const Var<T>& a);
template <class T> Var<T> log(const Var<T>& a);
template <class T> Var<T> exp(const Var<T>& a);
template <class T> Var<T> abs(const Var<T>& a);

/// Softmax / log-softmax over axis 1 of an NCHW (or N x C) tensor.
template <class T> Var<T> softmax_channels(const Var<T>& a);
template <class T> Var<T> log_softmax_channels(const Var<T>& a);

template <class T> Var<T> mean(const Var<T>& a);
template <class T> Var<T> sum(const Var<T>& a);
/// Sums an NCHW tensor over N, H and W: result has shape {C}.
template <class T> Var<T> channel_sum(const Var<T>& a);

template <class T> Var<T> avg_pool2d(const Var<T>& a, std::size_t window, std::size_t stride);
template <class T> Var<T> upsample_nearest2x(const Var<T>& a);

/// Row lookup: table K x E, ids of length N -> N x E.
template <class T> Var<T> embedding(const Var<T>& table, std::span<const int> ids);

/// Per-sample, per-channel standardisation of NCHW input; sigma clamped at min_sigma.
template <class T> Var<T> instance_norm(const Var<T>& a, T min_sigma = T(1e-5));

/// Adds bias[c] along axis 1 of a rank >= 2 tensor.
template <class T> Var<T> bias_add(const Var<T>& a, const Var<T>& bias);

template <class T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <class T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <class T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }

/// Scalar constant (shape {1}).
template <class T>
Var<T> constant_scalar(T value)
{
    return Var<T>(Tensor<T>(Shape{1}, value));
}

} // namespace redgan
