#pragma once

// The three players: mask- and class-conditioned generator, multiscale patch
// discriminator, and the U-Net segmentor (frozen during the adversarial game).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "redgan/blocks.hpp"

namespace redgan {

using KeyValues = std::map<std::string, std::string>;

struct GeneratorSpec {
    std::size_t image_size = 64;
    std::size_t n_blocks = 5;
    std::size_t n_upsamples = 3;
    std::size_t n_modalities = 2;
    std::size_t n_labels = 2; // foreground labels; masks carry n_labels + 1 channels
    std::size_t n_classes = 3;
    std::size_t base_channels = 128;
    std::size_t min_channels = 32;
    std::size_t spade_hidden = 64;
    std::size_t embed_width = 64;

    static GeneratorSpec full_scale();

    std::size_t base_resolution() const { return image_size >> n_upsamples; }
    /// Output channels of block i: max(min_channels, base_channels / 2^i).
    std::size_t block_channels(std::size_t i) const;
    void validate() const;
};

struct DiscriminatorSpec {
    std::size_t n_scales = 2;
    std::size_t base_channels = 32;
    std::size_t n_labels = 2;
    std::size_t n_modalities = 2;
    std::size_t feat_channels = 3;
    double slope = 0.2;

    std::size_t input_channels() const { return n_labels + 1 + n_modalities + feat_channels; }
    void validate() const;
};

enum class FeatureSource { Probabilities, DecoderActivations };

struct SegmentorSpec {
    std::size_t image_size = 64;
    std::size_t n_modalities = 2;
    std::size_t n_labels = 2;
    std::vector<std::size_t> stage_depths{1, 1, 1, 1};
    std::vector<std::size_t> encoder_widths{16, 16, 32, 64, 64}; // stem + 4 stages
    std::vector<std::size_t> decoder_widths{64, 32, 32, 16, 16}; // 5 decoder blocks
    FeatureSource features = FeatureSource::Probabilities;

    /// ResNet-34 stage layout with its channel widths.
    static SegmentorSpec full_scale();

    std::size_t feature_channels() const
    {
        return features == FeatureSource::Probabilities ? n_labels + 1 : decoder_widths.back();
    }
    void validate() const;
};

KeyValues to_kv(const GeneratorSpec& s);
KeyValues to_kv(const DiscriminatorSpec& s);
KeyValues to_kv(const SegmentorSpec& s);
/// Reads keys produced by to_kv; missing keys keep their defaults.
GeneratorSpec generator_spec_from_kv(const KeyValues& kv);
DiscriminatorSpec discriminator_spec_from_kv(const KeyValues& kv);
SegmentorSpec segmentor_spec_from_kv(const KeyValues& kv);

/// Labels (N x S x S, values in [0, n_labels]) to one-hot N x (n_labels+1) x S x S.
template <class T>
Tensor<T> one_hot(const Tensor<std::uint8_t>& labels, std::size_t n_labels);

// ---------------------------------------------------------------------------

template <class T>
class Generator {
public:
    Generator(const GeneratorSpec& spec, std::uint64_t seed);

    /// mask: one-hot N x (L+1) x S x S; one class id per sample. Output
    /// N x C_mod x S x S in [-1, 1].
    Var<T> forward(const Tensor<T>& mask, std::span<const int> class_ids) const;

    /// One spectral power-iteration round on every normalised conv.
    void power_iterate();

    const GeneratorSpec& spec() const noexcept { return spec_; }
    ParamStore<T>& store() noexcept { return store_; }
    const ParamStore<T>& store() const noexcept { return store_; }
    const std::vector<SpadeResBlock<T>>& blocks() const noexcept { return blocks_; }

private:
    GeneratorSpec spec_;
    ParamStore<T> store_;
    Conv2dLayer<T> head_;
    ClassEmbedding<T> embed_;
    std::vector<SpadeResBlock<T>> blocks_;
    Conv2dLayer<T> out_;
};

template <class T>
struct DiscriminatorOutput {
    std::vector<Var<T>> scores;                // one 1-channel patch map per scale
    std::vector<std::vector<Var<T>>> features; // post-activation maps per scale
};

template <class T>
class Discriminator {
public:
    Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);

    /// Inputs share batch and spatial size; the second scale sees the
    /// concatenated input average-pooled by 2.
    DiscriminatorOutput<T> forward(const Var<T>& mask, const Var<T>& image, const Var<T>& seg_feats) const;

    void power_iterate();

    const DiscriminatorSpec& spec() const noexcept { return spec_; }
    ParamStore<T>& store() noexcept { return store_; }
    const ParamStore<T>& store() const noexcept { return store_; }

private:
    struct Scale {
        Conv2dLayer<T> c1, c2, c3;
    };
    DiscriminatorSpec spec_;
    ParamStore<T> store_;
    std::vector<Scale> scales_;
};

template <class T>
class Segmentor {
public:
    Segmentor(const SegmentorSpec& spec, std::uint64_t seed);

    /// image N x C_mod x S x S -> logits N x (L+1) x S x S
    Var<T> logits(const Var<T>& image) const;
    /// Post-softmax probabilities (default) or last decoder activations.
    Var<T> features(const Var<T>& image) const;

    const SegmentorSpec& spec() const noexcept { return spec_; }
    ParamStore<T>& store() noexcept { return store_; }
    const ParamStore<T>& store() const noexcept { return store_; }

private:
    struct ResBlock {
        Conv2dLayer<T> conv1, conv2, shortcut;
        bool projected = false;
    };
    Var<T> run(const Var<T>& image, Var<T>* last_activation) const;

    SegmentorSpec spec_;
    ParamStore<T> store_;
    Conv2dLayer<T> stem_;
    std::vector<std::vector<ResBlock>> stages_;
    std::vector<Conv2dLayer<T>> decoder_;
    Conv2dLayer<T> head_;
};

/// The passive third player: a trained segmentor whose parameters never
/// receive gradients. Gradients still flow through it to its input.
template <class T>
class FrozenSegmentor {
public:
    explicit FrozenSegmentor(Segmentor<T> model);

    Var<T> features(const Var<T>& image) const { return model_.features(image); }
    Var<T> logits(const Var<T>& image) const { return model_.logits(image); }
    std::uint64_t checksum() const { return model_.store().checksum(); }
    /// True when no parameter holds a gradient buffer.
    bool grads_absent() const;
    const Segmentor<T>& model() const noexcept { return model_; }

private:
    Segmentor<T> model_;
};

} // namespace redgan
