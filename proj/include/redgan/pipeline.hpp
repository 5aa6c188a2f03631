#pragma once

// Orchestration: segmentor training, the three-player adversarial game,
// strategy I/II synthesis, augmented retraining and report assembly.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "redgan/adam.hpp"
#include "redgan/config.hpp"
#include "redgan/data.hpp"
#include "redgan/losses.hpp"
#include "redgan/models.hpp"

namespace redgan {

using LogFn = std::function<void(const std::string&)>;

template <class T>
struct Batch {
    Tensor<T> images;            // N x C_mod x S x S
    Tensor<T> masks;             // one-hot N x (L+1) x S x S
    Tensor<std::uint8_t> labels; // N x S x S
    std::vector<int> classes;
};

template <class T>
Batch<T> make_batch(std::span<const Record> records, std::span<const std::size_t> idx, std::size_t n_labels);

// ---------------------------------------------------------------------------
// Segmentor

struct SegTrainOptions {
    std::size_t epochs = 100;
    std::uint64_t seed = 1;
    LogFn log;
};

template <class T>
struct SegTrainResult {
    Segmentor<T> model;
    std::vector<double> epoch_loss; // mean step loss per epoch
};

/// Adam on jaccard_ce_loss over shuffled minibatches; no augmentation.
template <class T>
SegTrainResult<T> train_segmentor(std::span<const Record> train, const RunConfig& cfg, const SegTrainOptions& opt);

/// Per-record unweighted foreground Dice of the argmax prediction.
template <class T>
std::vector<double> evaluate_segmentor(const Segmentor<T>& model, std::span<const Record> records);

// ---------------------------------------------------------------------------
// Red-GAN

struct GanStepLog {
    std::size_t step = 0;
    double d_loss = 0;
    double g_hinge = 0;
    double feature_matching = 0;
    double g_total = 0;
};

struct GanTrainOptions {
    std::size_t steps = 0;
    std::uint64_t seed = 1;
    bool third_player = true;
    bool class_conditioned = true; // false: every sample uses class id 0
    LogFn log;
    std::size_t log_every = 100;
};

template <class T>
struct GanModels {
    Generator<T> generator;
    Discriminator<T> discriminator;
};

/// Builds G and D from cfg (G with K = 1 when unconditioned).
template <class T>
GanModels<T> make_gan(const RunConfig& cfg, std::uint64_t seed, bool class_conditioned = true);

/// Alternating 1:1 D/G steps. `frozen` may be null only without the third
/// player. Throws GraphError if the frozen segmentor's parameters change.
template <class T>
std::vector<GanStepLog> train_redgan(GanModels<T>& models, std::span<const Record> train,
                                     const FrozenSegmentor<T>* frozen, const RunConfig& cfg,
                                     const GanTrainOptions& opt);

/// Default step budget: epochs_gan passes over the train set, or gan_steps.
std::size_t gan_step_budget(const RunConfig& cfg, std::size_t n_train);

// ---------------------------------------------------------------------------
// Synthesis. Synthetic records carry the conditioning mask as ground truth
// and the donor record id in `source`.

using SyntheticBatch = std::vector<Record>;

/// One image per train record whose class differs from c, conditioned on c.
template <class T>
SyntheticBatch synthesize_strategy_I(const Generator<T>& g, std::span<const Record> train, int c,
                                     bool class_conditioned = true);

/// Union of strategy I over every class, in class order.
template <class T>
SyntheticBatch synthesize_strategy_II(const Generator<T>& g, std::span<const Record> train);

/// One image per train record from its own mask (and class when conditioned).
template <class T>
SyntheticBatch synthesize_from_masks(const Generator<T>& g, std::span<const Record> train,
                                     bool class_conditioned = true);

std::vector<std::size_t> class_totals(std::span<const Record> records, std::size_t n_classes);

// ---------------------------------------------------------------------------
// Checkpoints: NamedContainer with `kind=...` and spec key=value header lines.

template <class T>
void save_segmentor(const std::string& path, const Segmentor<T>& s);
template <class T>
Segmentor<T> load_segmentor(const std::string& path);
template <class T>
void save_gan(const std::string& path, const GanModels<T>& m);
template <class T>
GanModels<T> load_gan(const std::string& path);

// ---------------------------------------------------------------------------
// Experiments

struct Strategy {
    enum Kind { Baseline, I, II } kind = Baseline;
    int target_class = -1;
    std::string name() const; // "baseline", "I(c)", "II"
};

struct ReportCell {
    std::string condition;
    std::size_t fold = 0;
    int global_class = 0;
    std::size_t n_test = 0;
    double dice_mean = 0;
    double dice_std = 0;
    bool failed = false;
};

struct WilcoxonRow {
    std::string condition;
    int global_class = 0;
    double w = 0;
    double p_two_sided = 1;
};

struct ExperimentReport {
    std::string fingerprint;
    std::string pairing = "per-record test dice pooled over folds";
    std::vector<std::string> conditions;
    std::size_t n_folds = 0;
    std::size_t n_classes = 0;
    std::vector<ReportCell> cells;
    std::vector<WilcoxonRow> tests;
    std::vector<std::string> failures;

    const ReportCell* cell(const std::string& condition, std::size_t fold, int c) const;
};

struct ExperimentOptions {
    std::vector<Strategy> strategies; // baseline is always included
    LogFn log;
};

/// For each fold: baseline segmentor (also the frozen third player), one
/// Red-GAN, synthesis per strategy, fresh segmentor on real + synthetic,
/// per-record test Dice grouped by global class, then Wilcoxon vs baseline.
template <class T>
ExperimentReport run_experiment(const RunConfig& cfg, std::span<const Record> records, const ExperimentOptions& opt);

/// Test-split fingerprint of a partition (FNV over the sorted test ids).
std::string split_fingerprint(std::span<const Record> records, const Partition& p);

struct DilemmaResult {
    double per_class_dice = 0; // arm A: generator trained only on class c
    double global_dice = 0;    // arm B: globally conditioned Red-GAN
    std::string test_fingerprint_a, test_fingerprint_b;
};

/// Both arms feed strategy-I augmentation for class c on the same split and
/// report class-c mean test Dice of the retrained segmentor.
template <class T>
DilemmaResult run_dilemma_comparison(const RunConfig& cfg, std::span<const Record> records, int c,
                                     const Partition& split, std::uint64_t seed, LogFn log = {});

/// Records at the given indices.
std::vector<Record> select(std::span<const Record> records, std::span<const std::size_t> idx);

} // namespace redgan

namespace redgan {

struct ThirdPlayerResult {
    double dice_with = 0;    // segmentor trained only on third-player synthesis
    double dice_without = 0; // same, generator trained without the third player
};

/// Trains two unconditioned generators on split.train (with and without the
/// frozen segmentor's features), re-synthesises the train masks with each,
/// trains fresh segmentors on the synthetic sets alone and reports mean test
/// Dice on the real test split.
template <class T>
ThirdPlayerResult run_third_player_comparison(const RunConfig& cfg, std::span<const Record> records,
                                              const Partition& split, const FrozenSegmentor<T>& frozen,
                                              std::uint64_t seed, LogFn log = {});

} // namespace redgan
