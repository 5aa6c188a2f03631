#pragma once

// Records, the procedural ShapesMed surrogate dataset, split protocol and
// on-disk formats (record containers, manifest, PGM dumps).

#include <cstdint>
#include <string>
#include <vector>

#include "redgan/tensor.hpp"

namespace redgan {

enum class SplitTag { Train, Test };

const char* split_name(SplitTag s);
SplitTag split_from_name(const std::string& s);

struct Record {
    Tensor<float> image;       // C_mod x S x S, values in [-1, 1]
    Tensor<std::uint8_t> mask; // S x S, labels in [0, L]
    int global_class = 0;
    std::string id;
    SplitTag split = SplitTag::Train;
    std::string source; // provenance id of the mask donor for synthetic records

    std::size_t image_size() const { return mask.dim(0); }
    bool operator==(const Record&) const = default;
};

struct ClassStyle {
    double gain = 1.0;
    double texture_frequency = 2.0; // cycles per image width
    double noise_sigma = 0.05;
};

struct ShapesMedConfig {
    std::size_t n_records = 100;
    std::size_t image_size = 64;
    std::size_t n_classes = 3;
    std::size_t n_modalities = 2;
    std::size_t n_labels = 2;
    std::vector<double> class_proportions{0.7, 0.2, 0.1};
    std::vector<ClassStyle> styles{{1.0, 2.0, 0.03}, {0.65, 5.0, 0.06}, {0.4, 9.0, 0.1}};
    std::size_t lesions_min = 1, lesions_max = 3;
    double radius_min = 0.06, radius_max = 0.14; // fractions of S
    std::uint64_t seed = 1;

    void validate() const;
};

/// Floor allocation of proportions; the remainder goes to the largest class.
std::vector<std::size_t> class_counts(std::size_t n, const std::vector<double>& proportions);

/// Deterministic in cfg; records are tagged Train (use split_protocol for partitions).
std::vector<Record> generate_shapesmed(const ShapesMedConfig& cfg);

/// Renders one record image from a mask with the given style.
Tensor<float> render_image(const Tensor<std::uint8_t>& mask, std::size_t n_modalities, std::size_t n_labels,
                           const ClassStyle& style, std::uint64_t seed);

struct Partition {
    std::vector<std::size_t> train, test;
};

/// n_repeats independent shuffled partitions with round(n * test_fraction) test ids.
std::vector<Partition> split_protocol(std::size_t n_records, std::size_t n_repeats, double test_fraction,
                                      std::uint64_t seed);

/// Same, but the test share is drawn per global class so every class is
/// represented in each test split.
std::vector<Partition> split_protocol_stratified(const std::vector<int>& classes, std::size_t n_repeats,
                                                 double test_fraction, std::uint64_t seed);

void save_record(const std::string& path, const Record& r);
Record load_record(const std::string& path);

struct ManifestEntry {
    std::string path; // relative to the manifest directory
    int global_class = 0;
    SplitTag split = SplitTag::Train;
};

constexpr int kManifestVersion = 1;

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path, std::size_t n_classes = 0);

/// Writes records/<id>.rgr and manifest.tsv under dir.
void save_dataset(const std::string& dir, const std::vector<Record>& records);
std::vector<Record> load_dataset(const std::string& dir);

/// Binary P5 greyscale; values in [-1, 1] map to 0..255.
void write_pgm(const std::string& path, const float* values, std::size_t width, std::size_t height);

/// Tiles channel `channel` of several C x S x S images into a grid.
void write_pgm_grid(const std::string& path, const std::vector<Tensor<float>>& images, std::size_t channel,
                    std::size_t columns);

} // namespace redgan
