#include "redgan/models.hpp"

#include <sstream>

namespace redgan {

namespace {

bool is_pow2(std::size_t v) { return v && !(v & (v - 1)); }

std::string join(const std::vector<std::size_t>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::size_t parse_size(const std::string& key, const std::string& v)
{
    std::size_t pos = 0;
    unsigned long long x = 0;
    try {
        x = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    if (pos != v.size() || (!v.empty() && v[0] == '-'))
        throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(x);
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v)
{
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_size(key, item));
    return out;
}

void read(const KeyValues& kv, const std::string& key, std::size_t& dst)
{
    if (auto it = kv.find(key); it != kv.end()) dst = parse_size(key, it->second);
}

} // namespace

GeneratorSpec GeneratorSpec::full_scale()
{
    GeneratorSpec s;
    s.image_size = 256;
    s.n_blocks = 7;
    s.n_upsamples = 5;
    s.n_modalities = 4;
    s.n_labels = 3;
    s.n_classes = 10;
    s.base_channels = 1024;
    s.min_channels = 64;
    return s;
}

std::size_t GeneratorSpec::block_channels(std::size_t i) const
{
    const std::size_t c = i < 63 ? base_channels >> i : 0;
    return std::max(min_channels, c);
}

void GeneratorSpec::validate() const
{
    if (!is_pow2(image_size) || image_size < 32)
        throw ConfigError("generator image_size must be a power of two >= 32, got " + std::to_string(image_size));
    if (n_blocks != n_upsamples + 2)
        throw ConfigError("generator n_blocks must equal n_upsamples + 2 (got " + std::to_string(n_blocks) + " and " +
                          std::to_string(n_upsamples) + ")");
    if (base_resolution() == 0 || (base_resolution() << n_upsamples) != image_size)
        throw ConfigError("generator image_size not divisible by 2^n_upsamples");
    if (n_modalities == 0 || n_labels == 0 || n_classes == 0 || base_channels == 0 || min_channels == 0 ||
        spade_hidden == 0 || embed_width == 0)
        throw ConfigError("generator widths and counts must be positive");
}

void DiscriminatorSpec::validate() const
{
    if (n_scales == 0 || base_channels == 0 || n_modalities == 0 || n_labels == 0)
        throw ConfigError("discriminator counts must be positive");
}

SegmentorSpec SegmentorSpec::full_scale()
{
    SegmentorSpec s;
    s.image_size = 256;
    s.n_modalities = 4;
    s.n_labels = 3;
    s.stage_depths = {3, 4, 6, 3};
    s.encoder_widths = {64, 64, 128, 256, 512};
    s.decoder_widths = {256, 128, 64, 32, 16};
    return s;
}

void SegmentorSpec::validate() const
{
    if (!is_pow2(image_size) || image_size < 2)
        throw ConfigError("segmentor image_size must be a power of two, got " + std::to_string(image_size));
    if (stage_depths.size() != 4) throw ConfigError("segmentor needs 4 encoder stages");
    if (encoder_widths.size() != 5) throw ConfigError("segmentor needs 5 encoder widths (stem + 4 stages)");
    if (decoder_widths.size() != 5) throw ConfigError("segmentor needs 5 decoder widths");
    for (auto d : stage_depths)
        if (d == 0) throw ConfigError("segmentor stage depth must be positive");
}

KeyValues to_kv(const GeneratorSpec& s)
{
    return {{"generator.image_size", std::to_string(s.image_size)},
            {"generator.n_blocks", std::to_string(s.n_blocks)},
            {"generator.n_upsamples", std::to_string(s.n_upsamples)},
            {"generator.n_modalities", std::to_string(s.n_modalities)},
            {"generator.n_labels", std::to_string(s.n_labels)},
            {"generator.n_classes", std::to_string(s.n_classes)},
            {"generator.base_channels", std::to_string(s.base_channels)},
            {"generator.min_channels", std::to_string(s.min_channels)},
            {"generator.spade_hidden", std::to_string(s.spade_hidden)},
            {"generator.embed_width", std::to_string(s.embed_width)}};
}

KeyValues to_kv(const DiscriminatorSpec& s)
{
    return {{"discriminator.n_scales", std::to_string(s.n_scales)},
            {"discriminator.base_channels", std::to_string(s.base_channels)},
            {"discriminator.n_labels", std::to_string(s.n_labels)},
            {"discriminator.n_modalities", std::to_string(s.n_modalities)},
            {"discriminator.feat_channels", std::to_string(s.feat_channels)}};
}

KeyValues to_kv(const SegmentorSpec& s)
{
    return {{"segmentor.image_size", std::to_string(s.image_size)},
            {"segmentor.n_modalities", std::to_string(s.n_modalities)},
            {"segmentor.n_labels", std::to_string(s.n_labels)},
            {"segmentor.stage_depths", join(s.stage_depths)},
            {"segmentor.encoder_widths", join(s.encoder_widths)},
            {"segmentor.decoder_widths", join(s.decoder_widths)},
            {"segmentor.features", s.features == FeatureSource::Probabilities ? "probabilities" : "decoder"}};
}

GeneratorSpec generator_spec_from_kv(const KeyValues& kv)
{
    GeneratorSpec s;
    read(kv, "generator.image_size", s.image_size);
    read(kv, "generator.n_blocks", s.n_blocks);
    read(kv, "generator.n_upsamples", s.n_upsamples);
    read(kv, "generator.n_modalities", s.n_modalities);
    read(kv, "generator.n_labels", s.n_labels);
    read(kv, "generator.n_classes", s.n_classes);
    read(kv, "generator.base_channels", s.base_channels);
    read(kv, "generator.min_channels", s.min_channels);
    read(kv, "generator.spade_hidden", s.spade_hidden);
    read(kv, "generator.embed_width", s.embed_width);
    return s;
}

DiscriminatorSpec discriminator_spec_from_kv(const KeyValues& kv)
{
    DiscriminatorSpec s;
    read(kv, "discriminator.n_scales", s.n_scales);
    read(kv, "discriminator.base_channels", s.base_channels);
    read(kv, "discriminator.n_labels", s.n_labels);
    read(kv, "discriminator.n_modalities", s.n_modalities);
    read(kv, "discriminator.feat_channels", s.feat_channels);
    return s;
}

SegmentorSpec segmentor_spec_from_kv(const KeyValues& kv)
{
    SegmentorSpec s;
    read(kv, "segmentor.image_size", s.image_size);
    read(kv, "segmentor.n_modalities", s.n_modalities);
    read(kv, "segmentor.n_labels", s.n_labels);
    if (auto it = kv.find("segmentor.stage_depths"); it != kv.end()) s.stage_depths = parse_list(it->first, it->second);
    if (auto it = kv.find("segmentor.encoder_widths"); it != kv.end())
        s.encoder_widths = parse_list(it->first, it->second);
    if (auto it = kv.find("segmentor.decoder_widths"); it != kv.end())
        s.decoder_widths = parse_list(it->first, it->second);
    if (auto it = kv.find("segmentor.features"); it != kv.end()) {
        if (it->second == "probabilities")
            s.features = FeatureSource::Probabilities;
        else if (it->second == "decoder")
            s.features = FeatureSource::DecoderActivations;
        else
            throw ConfigError("key 'segmentor.features': expected probabilities|decoder, got '" + it->second + "'");
    }
    return s;
}

template <class T>
Tensor<T> one_hot(const Tensor<std::uint8_t>& labels, std::size_t n_labels)
{
    if (labels.rank() != 3) throw DimensionError("one_hot expects N x H x W labels, got " + shape_str(labels.shape()));
    const std::size_t n = labels.dim(0), h = labels.dim(1), w = labels.dim(2), plane = h * w;
    Tensor<T> out(Shape{n, n_labels + 1, h, w});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t l = labels[b * plane + i];
            if (l > n_labels) throw DomainError("label " + std::to_string(l) + " exceeds n_labels " + std::to_string(n_labels));
            out[(b * (n_labels + 1) + l) * plane + i] = T(1);
        }
    return out;
}

// ---------------------------------------------------------------------------

template <class T>
Generator<T>::Generator(const GeneratorSpec& spec, std::uint64_t seed) : spec_(spec)
{
    spec_.validate();
    Rng rng(seed);
    const std::size_t mask_ch = spec_.n_labels + 1;
    const std::size_t c0 = spec_.base_channels;
    head_ = Conv2dLayer<T>(store_, "generator.head", mask_ch, c0, ConvOptions{3, 1, 1, true, true}, rng);
    embed_ = ClassEmbedding<T>(store_, "generator.embed", spec_.n_classes, spec_.embed_width, c0,
                               spec_.base_resolution(), rng);
    std::size_t c_in = 2 * c0;
    for (std::size_t i = 0; i < spec_.n_blocks; ++i) {
        const std::size_t c_out = spec_.block_channels(i);
        blocks_.emplace_back(store_, "generator.block" + std::to_string(i), mask_ch, c_in, c_out, spec_.spade_hidden,
                             rng);
        c_in = c_out;
    }
    out_ = Conv2dLayer<T>(store_, "generator.out", c_in, spec_.n_modalities, ConvOptions{3, 1, 1, true, true}, rng);
}

template <class T>
Var<T> Generator<T>::forward(const Tensor<T>& mask, std::span<const int> class_ids) const
{
    const std::size_t S = spec_.image_size, L1 = spec_.n_labels + 1;
    if (mask.rank() != 4 || mask.dim(1) != L1 || mask.dim(2) != S || mask.dim(3) != S)
        throw DimensionError("generator mask must be N x " + std::to_string(L1) + " x " + std::to_string(S) + " x " +
                             std::to_string(S) + ", got " + shape_str(mask.shape()));
    if (class_ids.size() != mask.dim(0))
        throw DimensionError("generator needs one class id per mask (" + std::to_string(mask.dim(0)) + "), got " +
                             std::to_string(class_ids.size()));
    for (int id : class_ids)
        if (id < 0 || static_cast<std::size_t>(id) >= spec_.n_classes)
            throw DomainError("class id " + std::to_string(id) + " outside [0, " + std::to_string(spec_.n_classes) + ")");

    std::size_t res = spec_.base_resolution();
    Var<T> x = head_.forward(Var<T>(resize_nearest(mask, res)));
    x = concat_channels<T>({x, embed_.forward(class_ids)});
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        x = blocks_[i].forward(x, Var<T>(resize_nearest(mask, res)));
        if (i >= 1 && i + 1 < blocks_.size()) {
            x = upsample_nearest2x(x);
            res *= 2;
        }
    }
    return tanh(out_.forward(leaky_relu(x, T(0.2))));
}

template <class T>
void Generator<T>::power_iterate()
{
    head_.power_iterate();
    for (auto& b : blocks_) b.power_iterate();
    out_.power_iterate();
}

template <class T>
Discriminator<T>::Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) : spec_(spec)
{
    spec_.validate();
    Rng rng(seed);
    const std::size_t nf = spec_.base_channels;
    for (std::size_t s = 0; s < spec_.n_scales; ++s) {
        const std::string p = "discriminator.scale" + std::to_string(s);
        Scale sc;
        sc.c1 = Conv2dLayer<T>(store_, p + ".conv1", spec_.input_channels(), nf, ConvOptions{4, 2, 1, true, true}, rng);
        sc.c2 = Conv2dLayer<T>(store_, p + ".conv2", nf, 2 * nf, ConvOptions{4, 2, 1, true, true}, rng);
        sc.c3 = Conv2dLayer<T>(store_, p + ".conv3", 2 * nf, 1, ConvOptions{4, 1, 1, true, true}, rng);
        scales_.push_back(std::move(sc));
    }
}

template <class T>
DiscriminatorOutput<T> Discriminator<T>::forward(const Var<T>& mask, const Var<T>& image, const Var<T>& seg_feats) const
{
    for (const Var<T>* v : {&image, &seg_feats}) {
        const Shape& a = mask.shape();
        const Shape& b = v->shape();
        if (a.size() != 4 || b.size() != 4 || a[0] != b[0] || a[2] != b[2] || a[3] != b[3])
            throw DimensionError("discriminator inputs disagree: mask " + shape_str(a) + " vs " + shape_str(b));
    }
    const std::size_t expected = spec_.input_channels();
    const std::size_t got = mask.shape()[1] + image.shape()[1] + seg_feats.shape()[1];
    if (got != expected)
        throw DimensionError("discriminator expects " + std::to_string(expected) + " input channels, got " +
                             std::to_string(got));
    DiscriminatorOutput<T> out;
    Var<T> x = concat_channels<T>({mask, image, seg_feats});
    const T slope = static_cast<T>(spec_.slope);
    for (std::size_t s = 0; s < scales_.size(); ++s) {
        if (s > 0) x = avg_pool2d(x, 2, 2);
        Var<T> h1 = leaky_relu(scales_[s].c1.forward(x), slope);
        Var<T> h2 = leaky_relu(scales_[s].c2.forward(h1), slope);
        out.scores.push_back(scales_[s].c3.forward(h2));
        out.features.push_back({h1, h2});
    }
    return out;
}

template <class T>
void Discriminator<T>::power_iterate()
{
    for (auto& s : scales_) {
        s.c1.power_iterate();
        s.c2.power_iterate();
        s.c3.power_iterate();
    }
}

template <class T>
Segmentor<T>::Segmentor(const SegmentorSpec& spec, std::uint64_t seed) : spec_(spec)
{
    spec_.validate();
    Rng rng(seed);
    const auto& ew = spec_.encoder_widths;
    const auto& dw = spec_.decoder_widths;
    stem_ = Conv2dLayer<T>(store_, "segmentor.stem", spec_.n_modalities, ew[0], ConvOptions{3, 2, 1, true, false}, rng,
                           InitScheme::HeNormal);
    std::size_t res = (spec_.image_size + 1) / 2;
    std::size_t c_in = ew[0];
    for (std::size_t i = 0; i < 4; ++i) {
        std::vector<ResBlock> stage;
        for (std::size_t j = 0; j < spec_.stage_depths[i]; ++j) {
            const std::size_t stride = (j == 0 && res > 1) ? 2 : 1;
            const std::string p = "segmentor.stage" + std::to_string(i + 1) + ".block" + std::to_string(j);
            ResBlock b;
            b.conv1 = Conv2dLayer<T>(store_, p + ".conv1", c_in, ew[i + 1], ConvOptions{3, stride, 1, true, false}, rng,
                                     InitScheme::HeNormal);
            b.conv2 = Conv2dLayer<T>(store_, p + ".conv2", ew[i + 1], ew[i + 1], ConvOptions{3, 1, 1, true, false}, rng,
                                     InitScheme::HeNormal);
            b.projected = stride != 1 || c_in != ew[i + 1];
            if (b.projected)
                b.shortcut = Conv2dLayer<T>(store_, p + ".shortcut", c_in, ew[i + 1],
                                            ConvOptions{1, stride, 0, false, false}, rng, InitScheme::HeNormal);
            if (stride == 2) res = (res + 1) / 2;
            c_in = ew[i + 1];
            stage.push_back(std::move(b));
        }
        stages_.push_back(std::move(stage));
    }
    for (std::size_t j = 0; j < 5; ++j) {
        // upsample, concatenate the matching encoder output (none at full resolution), conv
        const std::size_t in = (j == 0 ? ew[4] : dw[j - 1]) + (j < 4 ? ew[3 - j] : 0);
        decoder_.push_back(Conv2dLayer<T>(store_, "segmentor.decoder" + std::to_string(j), in, dw[j],
                                          ConvOptions{3, 1, 1, true, false}, rng, InitScheme::HeNormal));
    }
    head_ = Conv2dLayer<T>(store_, "segmentor.head", dw[4], spec_.n_labels + 1, ConvOptions{1, 1, 0, true, false}, rng);
}

template <class T>
Var<T> Segmentor<T>::run(const Var<T>& image, Var<T>* last_activation) const
{
    const Shape& s = image.shape();
    if (s.size() != 4 || s[1] != spec_.n_modalities || s[2] != spec_.image_size || s[3] != spec_.image_size)
        throw DimensionError("segmentor input must be N x " + std::to_string(spec_.n_modalities) + " x " +
                             std::to_string(spec_.image_size) + "^2, got " + shape_str(s));
    std::vector<Var<T>> skips;
    Var<T> x = relu(stem_.forward(image));
    skips.push_back(x);
    for (const auto& stage : stages_) {
        for (const auto& b : stage) {
            Var<T> y = b.conv2.forward(relu(b.conv1.forward(x)));
            Var<T> sc = b.projected ? b.shortcut.forward(x) : x;
            x = relu(add(y, sc));
        }
        skips.push_back(x);
    }
    for (std::size_t j = 0; j < 5; ++j) {
        const std::size_t target = j < 4 ? skips[3 - j].shape()[2] : spec_.image_size;
        while (x.shape()[2] < target) x = upsample_nearest2x(x);
        if (j < 4) x = concat_channels<T>({x, skips[3 - j]});
        x = relu(decoder_[j].forward(x));
    }
    if (last_activation) *last_activation = x;
    return head_.forward(x);
}

template <class T>
Var<T> Segmentor<T>::logits(const Var<T>& image) const
{
    return run(image, nullptr);
}

template <class T>
Var<T> Segmentor<T>::features(const Var<T>& image) const
{
    if (spec_.features == FeatureSource::Probabilities) return softmax_channels(run(image, nullptr));
    Var<T> act;
    run(image, &act);
    return act;
}

template <class T>
FrozenSegmentor<T>::FrozenSegmentor(Segmentor<T> model) : model_(std::move(model))
{
    model_.store().set_requires_grad(false);
}

template <class T>
bool FrozenSegmentor<T>::grads_absent() const
{
    for (const auto& [n, v] : model_.store().param_entries())
        if (v.has_grad() || v.requires_grad()) return false;
    return true;
}

template Tensor<float> one_hot<float>(const Tensor<std::uint8_t>&, std::size_t);
template Tensor<double> one_hot<double>(const Tensor<std::uint8_t>&, std::size_t);
template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template class Segmentor<float>;
template class Segmentor<double>;
template class FrozenSegmentor<float>;
template class FrozenSegmentor<double>;

} // namespace redgan
