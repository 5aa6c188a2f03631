#include "redgan/autodiff.hpp"

#include <array>
#include <atomic>

namespace redgan {

namespace {

constexpr std::array<const char*, static_cast<std::size_t>(OpKind::Count_)> kOpNames = {
    "add",     "sub",         "mul",      "div",        "scale",    "add_scalar",    "matmul",
    "conv2d",  "reshape",     "transpose", "concat",    "relu",     "leaky_relu",    "tanh",
    "sigmoid", "softmax",     "log_softmax", "log",     "exp",      "abs",           "mean",
    "sum",     "channel_sum", "avg_pool2d", "upsample_nearest2x", "embedding", "instance_norm", "bias_add"};

std::atomic<int> g_fault_op{-1};
std::atomic<double> g_fault_scale{0.0};

} // namespace

const char* op_name(OpKind op) { return kOpNames.at(static_cast<std::size_t>(op)); }

std::optional<OpKind> op_from_name(std::string_view name)
{
    for (std::size_t i = 0; i < kOpNames.size(); ++i)
        if (name == kOpNames[i]) return static_cast<OpKind>(i);
    return std::nullopt;
}

namespace fault {
void inject(OpKind op, double relative_error)
{
    g_fault_scale = relative_error;
    g_fault_op = static_cast<int>(op);
}
void clear() { g_fault_op = -1; }
} // namespace fault

// ---------------------------------------------------------------------------

template <class T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>())
{
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

template <class T>
T Var<T>::item() const
{
    if (numel() != 1) throw DimensionError("item() on non-scalar " + shape_str(shape()));
    return node_->value[0];
}

template <class T>
void Var<T>::set_requires_grad(bool on)
{
    if (!node_->is_leaf) throw GraphError("requires_grad can only be changed on leaves");
    node_->requires_grad = on;
    if (!on) node_->grad = Tensor<T>();
}

template <class T>
const Tensor<T>& Var<T>::grad() const
{
    if (!has_grad()) throw GraphError("no gradient has been accumulated for this variable");
    return node_->grad;
}

template <class T>
Tensor<T>& Var<T>::mutable_value()
{
    if (!node_->is_leaf) throw GraphError("only leaf values may be mutated");
    return node_->value;
}

template <class T>
Tensor<T>* BackwardContext<T>::grad_in(std::size_t i) const
{
    Node<T>& n = *inputs[i];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return &n.grad;
}

template <class T>
void Tape<T>::record(OpKind op, std::vector<std::shared_ptr<Node<T>>> inputs, const std::shared_ptr<Node<T>>& output,
                     BackwardFn fn)
{
    output->tape = this;
    output->is_leaf = false;
    output->requires_grad = true;
    entries_.push_back(Entry{op, std::move(inputs), output, std::move(fn)});
}

template <class T>
void Tape<T>::backward(const Var<T>& seed)
{
    if (!seed.defined() || seed.node()->tape != this) throw GraphError("backward seed was not produced on this tape");
    if (seed.numel() != 1) throw GraphError("backward seed must be a scalar, got " + shape_str(seed.shape()));

    for (auto& e : entries_) e.output->grad = Tensor<T>();
    seed.node()->grad = Tensor<T>(seed.shape(), T(1));

    const int fault_op = g_fault_op.load();
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        Entry& e = *it;
        if (e.output->grad.empty()) continue;
        Tensor<T> gout = std::move(e.output->grad);
        e.output->grad = Tensor<T>();
        if (fault_op == static_cast<int>(e.op)) {
            const T s = T(1) + static_cast<T>(g_fault_scale.load());
            for (auto& g : gout.data()) g *= s;
        }
        BackwardContext<T> ctx{gout, *e.output, e.inputs};
        e.fn(ctx);
    }
}

template <class T>
Tape<T>*& active_tape()
{
    thread_local Tape<T>* tape = nullptr;
    return tape;
}

template class Var<float>;
template class Var<double>;
template struct BackwardContext<float>;
template struct BackwardContext<double>;
template class Tape<float>;
template class Tape<double>;
template Tape<float>*& active_tape<float>();
template Tape<double>*& active_tape<double>();

} // namespace redgan
