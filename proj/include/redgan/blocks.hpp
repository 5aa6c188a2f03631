#pragma once

// Layers shared by the generator, discriminator and segmentor: parameter
// storage, convolutions with optional spectral normalisation, SPADE
// normalisation, the SPADE residual block and the class embedding.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "redgan/autodiff.hpp"

namespace redgan {

using Rng = std::mt19937_64;

/// splitmix64 step: derives independent stream seeds from one master seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Named trainable parameters plus non-trainable buffers (spectral vectors).
template <class T>
class ParamStore {
public:
    Var<T> add_param(const std::string& name, Tensor<T> init);
    Var<T> add_buffer(const std::string& name, Tensor<T> init);

    std::vector<Var<T>> params() const;
    const std::vector<std::pair<std::string, Var<T>>>& param_entries() const { return params_; }
    const std::vector<std::pair<std::string, Var<T>>>& buffer_entries() const { return buffers_; }

    /// Total number of trainable scalars.
    std::size_t param_count() const;
    void set_requires_grad(bool on);
    void zero_grad();

    void save(NamedContainer& out) const;
    /// Loads every parameter and buffer by name; shapes must agree.
    void load(const NamedContainer& in);

    /// FNV-1a over names and raw bytes of parameters and buffers.
    std::uint64_t checksum() const;

private:
    std::vector<std::pair<std::string, Var<T>>> params_;
    std::vector<std::pair<std::string, Var<T>>> buffers_;
};

// ---------------------------------------------------------------------------
// Spectral normalisation

template <class T>
struct SpectralState {
    Var<T> u; // out-channels
    Var<T> v; // prod(other dims)
    int n_power_iterations = 1;
};

/// Runs `iterations` power-iteration rounds on W (flattened to out x rest),
/// updating u and v in place. Returns the estimate sigma = u^T W v. A zero
/// matrix leaves the state untouched and returns 0.
template <class T>
double spectral_power_iterate(const Tensor<T>& weight, SpectralState<T>& state, int iterations);

/// W / (u^T W v) with u, v held constant; W itself when the estimate is 0.
template <class T>
Var<T> spectral_normalize(const Var<T>& weight, const SpectralState<T>& state);

struct SpectralResult {
    double sigma = 0;
};

/// One update (state.n_power_iterations rounds) followed by normalisation.
template <class T>
Var<T> spectral_norm_apply(const Var<T>& weight, SpectralState<T>& state, SpectralResult* info = nullptr);

// ---------------------------------------------------------------------------

struct ConvOptions {
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t padding = 1;
    bool bias = true;
    bool spectral = false;
};

enum class InitScheme { Uniform, HeNormal };

template <class T>
class Conv2dLayer {
public:
    Conv2dLayer() = default;
    Conv2dLayer(ParamStore<T>& store, const std::string& name, std::size_t in_ch, std::size_t out_ch,
                ConvOptions opt, Rng& rng, InitScheme init = InitScheme::Uniform);

    Var<T> forward(const Var<T>& x) const;
    /// Effective weight (spectrally normalised when enabled).
    Var<T> effective_weight() const;
    void power_iterate();

    Var<T> weight, bias;
    std::optional<SpectralState<T>> spectral;
    std::size_t stride = 1, padding = 0;
};

/// Nearest-neighbour resize of an NCHW tensor to size x size.
template <class T>
Tensor<T> resize_nearest(const Tensor<T>& input, std::size_t size);

/// Spatially-adaptive normalisation:
///   out = gamma(M) * (h - mu_c) / sigma_c + beta(M)
/// with per-sample channel statistics and gamma/beta produced by
/// shared conv -> relu -> {gamma conv, beta conv} on the one-hot mask.
template <class T>
class SpadeNorm {
public:
    SpadeNorm() = default;
    SpadeNorm(ParamStore<T>& store, const std::string& prefix, const std::string& suffix, std::size_t mask_channels,
              std::size_t channels, std::size_t hidden, Rng& rng);

    /// `mask` must already match h's spatial size.
    Var<T> forward(const Var<T>& h, const Var<T>& mask) const;

    std::size_t channels = 0;
    Conv2dLayer<T> shared, gamma, beta;
};

template <class T>
class SpadeResBlock {
public:
    SpadeResBlock() = default;
    SpadeResBlock(ParamStore<T>& store, const std::string& prefix, std::size_t mask_channels, std::size_t c_in,
                  std::size_t c_out, std::size_t hidden, Rng& rng);

    Var<T> forward(const Var<T>& x, const Var<T>& mask) const;
    void power_iterate();

    std::size_t c_in = 0, c_out = 0, c_mid = 0;
    SpadeNorm<T> norm1, norm2, norm_skip;
    Conv2dLayer<T> conv1, conv2, skip;
    bool learned_skip = false;
};

/// Global-class conditioning: table lookup, linear projection, reshape to
/// channels x size x size.
template <class T>
class ClassEmbedding {
public:
    ClassEmbedding() = default;
    ClassEmbedding(ParamStore<T>& store, const std::string& prefix, std::size_t n_classes, std::size_t width,
                   std::size_t channels, std::size_t size, Rng& rng);

    Var<T> forward(std::span<const int> class_ids) const;

    std::size_t n_classes = 0, width = 0, channels = 0, size = 0;
    Var<T> table, projection, proj_bias;
};

} // namespace redgan
