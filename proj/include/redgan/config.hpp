#pragma once

// Flat key=value run configuration covering data, model and training settings.

#include <cstdint>
#include <string>

#include "redgan/data.hpp"
#include "redgan/losses.hpp"
#include "redgan/models.hpp"

namespace redgan {

struct TrainConfig {
    std::size_t epochs_seg = 100;
    std::size_t epochs_gan = 80;
    std::size_t gan_steps = 0; // > 0 overrides epochs_gan
    std::size_t batch_size = 4;
    double lr_g = 1e-4, lr_d = 4e-4, beta1 = 0.0, beta2 = 0.9;
    double lr_seg = 1e-3, seg_beta1 = 0.9, seg_beta2 = 0.999;
    LossWeights weights;
    bool third_player = true;
    std::size_t folds = 3;
    double test_fraction = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
};

struct RunConfig {
    ShapesMedConfig data;
    GeneratorSpec generator;
    DiscriminatorSpec discriminator;
    SegmentorSpec segmentor;
    TrainConfig train;

    /// Copies the shared sizes (image size, classes, modalities, labels,
    /// feature channels) from `data`/`segmentor` into the model specs.
    void sync();
    void validate() const;
};

/// Defaults with shared sizes synced.
RunConfig default_run_config();

/// Parses `key = value` lines; '#' starts a comment. Every error names the
/// offending key and line. Keys not given keep their defaults.
RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_run_config(const std::string& path);

/// Applies one assignment; throws ConfigError for unknown keys or bad values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Canonical text: every key, sorted, one per line.
std::string to_text(const RunConfig& cfg);

/// 16 hex digits of FNV-1a over to_text.
std::string fingerprint(const RunConfig& cfg);

} // namespace redgan
