#include "redgan/blocks.hpp"

#include <cmath>
#include <cstring>

namespace redgan {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------

template <class T>
Var<T> ParamStore<T>::add_param(const std::string& name, Tensor<T> init)
{
    for (const auto& [n, v] : params_)
        if (n == name) throw GraphError("duplicate parameter name " + name);
    Var<T> v(std::move(init), true);
    params_.emplace_back(name, v);
    return v;
}

template <class T>
Var<T> ParamStore<T>::add_buffer(const std::string& name, Tensor<T> init)
{
    Var<T> v(std::move(init), false);
    buffers_.emplace_back(name, v);
    return v;
}

template <class T>
std::vector<Var<T>> ParamStore<T>::params() const
{
    std::vector<Var<T>> out;
    for (const auto& [n, v] : params_) out.push_back(v);
    return out;
}

template <class T>
std::size_t ParamStore<T>::param_count() const
{
    std::size_t n = 0;
    for (const auto& [name, v] : params_) n += v.numel();
    return n;
}

template <class T>
void ParamStore<T>::set_requires_grad(bool on)
{
    for (auto& [n, v] : params_) v.set_requires_grad(on);
}

template <class T>
void ParamStore<T>::zero_grad()
{
    for (auto& [n, v] : params_) v.zero_grad();
}

template <class T>
void ParamStore<T>::save(NamedContainer& out) const
{
    for (const auto& [n, v] : params_) out.add(n, v.value());
    for (const auto& [n, v] : buffers_) out.add(n, v.value());
}

template <class T>
void ParamStore<T>::load(const NamedContainer& in)
{
    auto load_one = [&](const std::string& name, Var<T>& v) {
        Tensor<T> t = in.get_float<T>(name);
        if (t.shape() != v.shape())
            throw FormatError("checkpoint entry '" + name + "' has shape " + shape_str(t.shape()) + ", expected " +
                              shape_str(v.shape()));
        v.mutable_value() = std::move(t);
    };
    for (auto& [n, v] : params_) load_one(n, v);
    for (auto& [n, v] : buffers_) load_one(n, v);
}

template <class T>
std::uint64_t ParamStore<T>::checksum() const
{
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto* list : {&params_, &buffers_})
        for (const auto& [n, v] : *list) {
            mix(n.data(), n.size());
            mix(v.value().ptr(), v.numel() * sizeof(T));
        }
    return h;
}

template class ParamStore<float>;
template class ParamStore<double>;

// ---------------------------------------------------------------------------

namespace {

template <class T>
void normalize_in_place(Tensor<T>& t, double norm)
{
    for (auto& x : t.data()) x = static_cast<T>(x / norm);
}

} // namespace

template <class T>
double spectral_power_iterate(const Tensor<T>& weight, SpectralState<T>& state, int iterations)
{
    const std::size_t rows = weight.dim(0), cols = weight.size() / rows;
    bool nonzero = false;
    for (T x : weight.data()) nonzero = nonzero || x != T(0);
    if (!nonzero) return 0.0;

    Tensor<T>& u = state.u.mutable_value();
    Tensor<T>& v = state.v.mutable_value();
    const T* w = weight.ptr();
    std::vector<double> tmp;
    for (int it = 0; it < iterations; ++it) {
        // v = W^T u / |W^T u|
        tmp.assign(cols, 0.0);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) tmp[j] += static_cast<double>(w[i * cols + j]) * u[i];
        double nv = 0;
        for (double x : tmp) nv += x * x;
        nv = std::sqrt(nv);
        if (nv == 0) return 0.0;
        for (std::size_t j = 0; j < cols; ++j) v[j] = static_cast<T>(tmp[j] / nv);
        // u = W v / |W v|
        tmp.assign(rows, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < cols; ++j) s += static_cast<double>(w[i * cols + j]) * v[j];
            tmp[i] = s;
        }
        double nu = 0;
        for (double x : tmp) nu += x * x;
        nu = std::sqrt(nu);
        if (nu == 0) return 0.0;
        for (std::size_t i = 0; i < rows; ++i) u[i] = static_cast<T>(tmp[i] / nu);
    }
    double sigma = 0;
    for (std::size_t i = 0; i < rows; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < cols; ++j) s += static_cast<double>(w[i * cols + j]) * v[j];
        sigma += u[i] * s;
    }
    return sigma;
}

template <class T>
Var<T> spectral_normalize(const Var<T>& weight, const SpectralState<T>& state)
{
    const std::size_t rows = weight.shape()[0], cols = weight.numel() / rows;
    Var<T> w2d = reshape(weight, Shape{rows, cols});
    Var<T> v = reshape(state.v, Shape{cols, 1});
    Var<T> u = reshape(state.u, Shape{rows, 1});
    Var<T> sigma = sum(mul(matmul(w2d, v), u));
    if (sigma.item() == T(0)) return weight;
    return div(weight, sigma);
}

template <class T>
Var<T> spectral_norm_apply(const Var<T>& weight, SpectralState<T>& state, SpectralResult* info)
{
    const double sigma = spectral_power_iterate(weight.value(), state, state.n_power_iterations);
    if (info) info->sigma = sigma;
    if (sigma == 0.0) return weight;
    return spectral_normalize(weight, state);
}

// ---------------------------------------------------------------------------

template <class T>
Conv2dLayer<T>::Conv2dLayer(ParamStore<T>& store, const std::string& name, std::size_t in_ch, std::size_t out_ch,
                            ConvOptions opt, Rng& rng, InitScheme init)
    : stride(opt.stride), padding(opt.padding)
{
    const std::size_t fan_in = in_ch * opt.kernel * opt.kernel;
    Tensor<T> w(Shape{out_ch, in_ch, opt.kernel, opt.kernel});
    if (init == InitScheme::HeNormal) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        for (auto& x : w.data()) x = static_cast<T>(dist(rng));
    } else {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& x : w.data()) x = static_cast<T>(dist(rng));
    }
    weight = store.add_param(name + ".weight", std::move(w));
    if (opt.bias) bias = store.add_param(name + ".bias", Tensor<T>(Shape{out_ch}));
    if (opt.spectral) {
        SpectralState<T> s;
        std::normal_distribution<double> nd(0.0, 1.0);
        Tensor<T> u(Shape{out_ch});
        double norm = 0;
        for (auto& x : u.data()) {
            x = static_cast<T>(nd(rng));
            norm += static_cast<double>(x) * x;
        }
        normalize_in_place(u, std::sqrt(norm));
        s.u = store.add_buffer(name + ".sn_u", std::move(u));
        s.v = store.add_buffer(name + ".sn_v", Tensor<T>(Shape{fan_in}));
        spectral = std::move(s);
        power_iterate();
    }
}

template <class T>
Var<T> Conv2dLayer<T>::effective_weight() const
{
    return spectral ? spectral_normalize(weight, *spectral) : weight;
}

template <class T>
Var<T> Conv2dLayer<T>::forward(const Var<T>& x) const
{
    return conv2d(x, effective_weight(), bias, stride, padding);
}

template <class T>
void Conv2dLayer<T>::power_iterate()
{
    if (spectral) spectral_power_iterate(weight.value(), *spectral, spectral->n_power_iterations);
}

template <class T>
Tensor<T> resize_nearest(const Tensor<T>& input, std::size_t size)
{
    const Shape& s = input.shape();
    if (s.size() != 4) throw DimensionError("resize_nearest needs NCHW, got " + shape_str(s));
    if (s[2] == size && s[3] == size) return input;
    Tensor<T> out(Shape{s[0], s[1], size, size});
    for (std::size_t p = 0; p < s[0] * s[1]; ++p)
        for (std::size_t y = 0; y < size; ++y) {
            const std::size_t sy = y * s[2] / size;
            for (std::size_t x = 0; x < size; ++x) out[(p * size + y) * size + x] = input[(p * s[2] + sy) * s[3] + x * s[3] / size];
        }
    return out;
}

template <class T>
SpadeNorm<T>::SpadeNorm(ParamStore<T>& store, const std::string& prefix, const std::string& suffix,
                        std::size_t mask_channels, std::size_t channels_, std::size_t hidden, Rng& rng)
    : channels(channels_)
{
    const ConvOptions c3{3, 1, 1, true, false};
    shared = Conv2dLayer<T>(store, prefix + ".shared" + suffix, mask_channels, hidden, c3, rng);
    gamma = Conv2dLayer<T>(store, prefix + ".gamma" + suffix, hidden, channels, c3, rng);
    beta = Conv2dLayer<T>(store, prefix + ".beta" + suffix, hidden, channels, c3, rng);
    // gamma starts near 1 so the block initially passes normalised features through
    gamma.bias.mutable_value().fill(T(1));
}

template <class T>
Var<T> SpadeNorm<T>::forward(const Var<T>& h, const Var<T>& mask) const
{
    if (h.shape().size() != 4 || h.shape()[1] != channels)
        throw DimensionError("spade_normalize: expected " + std::to_string(channels) + " channels, got " +
                             shape_str(h.shape()));
    if (mask.shape().size() != 4 || mask.shape()[0] != h.shape()[0] || mask.shape()[2] != h.shape()[2] ||
        mask.shape()[3] != h.shape()[3])
        throw DimensionError("spade_normalize: mask " + shape_str(mask.shape()) + " does not match features " +
                             shape_str(h.shape()));
    Var<T> actv = relu(shared.forward(mask));
    Var<T> g = gamma.forward(actv);
    Var<T> b = beta.forward(actv);
    return add(mul(g, instance_norm(h)), b);
}

template <class T>
SpadeResBlock<T>::SpadeResBlock(ParamStore<T>& store, const std::string& prefix, std::size_t mask_channels,
                                std::size_t c_in_, std::size_t c_out_, std::size_t hidden, Rng& rng)
    : c_in(c_in_), c_out(c_out_), c_mid(std::min(c_in_, c_out_)), learned_skip(c_in_ != c_out_)
{
    const ConvOptions sn3{3, 1, 1, true, true};
    norm1 = SpadeNorm<T>(store, prefix, "1", mask_channels, c_in, hidden, rng);
    conv1 = Conv2dLayer<T>(store, prefix + ".conv1", c_in, c_mid, sn3, rng);
    norm2 = SpadeNorm<T>(store, prefix, "2", mask_channels, c_mid, hidden, rng);
    conv2 = Conv2dLayer<T>(store, prefix + ".conv2", c_mid, c_out, sn3, rng);
    if (learned_skip) {
        norm_skip = SpadeNorm<T>(store, prefix, "_s", mask_channels, c_in, hidden, rng);
        skip = Conv2dLayer<T>(store, prefix + ".skip", c_in, c_out, ConvOptions{1, 1, 0, false, true}, rng);
    }
}

template <class T>
Var<T> SpadeResBlock<T>::forward(const Var<T>& x, const Var<T>& mask) const
{
    if (x.shape().size() != 4 || x.shape()[1] != c_in)
        throw DimensionError("spade_resblock: expected " + std::to_string(c_in) + " input channels, got " +
                             shape_str(x.shape()));
    Var<T> dx = conv1.forward(leaky_relu(norm1.forward(x, mask), T(0.2)));
    dx = conv2.forward(leaky_relu(norm2.forward(dx, mask), T(0.2)));
    Var<T> xs = learned_skip ? skip.forward(norm_skip.forward(x, mask)) : x;
    return add(xs, dx);
}

template <class T>
void SpadeResBlock<T>::power_iterate()
{
    conv1.power_iterate();
    conv2.power_iterate();
    if (learned_skip) skip.power_iterate();
}

template <class T>
ClassEmbedding<T>::ClassEmbedding(ParamStore<T>& store, const std::string& prefix, std::size_t n_classes_,
                                  std::size_t width_, std::size_t channels_, std::size_t size_, Rng& rng)
    : n_classes(n_classes_), width(width_), channels(channels_), size(size_)
{
    Tensor<T> tab(Shape{n_classes, width});
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& x : tab.data()) x = static_cast<T>(nd(rng));
    table = store.add_param(prefix + ".table", std::move(tab));
    const std::size_t out = channels * size * size;
    Tensor<T> proj(Shape{width, out});
    const double bound = 1.0 / std::sqrt(static_cast<double>(width));
    std::uniform_real_distribution<double> ud(-bound, bound);
    for (auto& x : proj.data()) x = static_cast<T>(ud(rng));
    projection = store.add_param(prefix + ".projection.weight", std::move(proj));
    proj_bias = store.add_param(prefix + ".projection.bias", Tensor<T>(Shape{out}));
}

template <class T>
Var<T> ClassEmbedding<T>::forward(std::span<const int> class_ids) const
{
    Var<T> e = embedding(table, class_ids);
    Var<T> p = bias_add(matmul(e, projection), proj_bias);
    return reshape(p, Shape{class_ids.size(), channels, size, size});
}

#define REDGAN_BLOCKS_INSTANTIATE(T)                                                            \
    template double spectral_power_iterate<T>(const Tensor<T>&, SpectralState<T>&, int);         \
    template Var<T> spectral_normalize<T>(const Var<T>&, const SpectralState<T>&);               \
    template Var<T> spectral_norm_apply<T>(const Var<T>&, SpectralState<T>&, SpectralResult*);   \
    template Tensor<T> resize_nearest<T>(const Tensor<T>&, std::size_t);                         \
    template class Conv2dLayer<T>;                                                               \
    template class SpadeNorm<T>;                                                                 \
    template class SpadeResBlock<T>;                                                             \
    template class ClassEmbedding<T>;

REDGAN_BLOCKS_INSTANTIATE(float)
REDGAN_BLOCKS_INSTANTIATE(double)

} // namespace redgan
