#pragma once

// Small run configurations shared by the pipeline tests and the acceptance binary.

#include <string>

#include "redgan/config.hpp"

namespace desk {

/// S = 32, narrow generator, tiny segmentor. Fast enough for unit tests.
inline std::string tiny_text(std::size_t n_records = 30)
{
    return "n_records=" + std::to_string(n_records) +
           "\n"
           "image_size=32\n"
           "g_n_blocks=4\n"
           "g_n_upsamples=2\n"
           "g_base_channels=8\n"
           "g_min_channels=8\n"
           "g_spade_hidden=8\n"
           "g_embed_width=8\n"
           "d_base_channels=8\n"
           "s_encoder_widths=4,4,8,8,8\n"
           "s_decoder_widths=8,8,4,4,4\n"
           "epochs_seg=2\n"
           "gan_steps=3\n"
           "batch_size=4\n"
           "folds=2\n"
           "test_fraction=0.2\n";
}

inline redgan::RunConfig tiny(std::size_t n_records = 30)
{
    return redgan::parse_run_config(tiny_text(n_records), "desk");
}

} // namespace desk
