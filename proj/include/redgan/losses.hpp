#pragma once

// Adversarial and segmentation objectives, plus the evaluation Dice.

#include <cstdint>
#include <vector>

#include "redgan/autodiff.hpp"

namespace redgan {

struct LossWeights {
    double lambda_fm = 10.0;
    double lambda_jaccard = 1.0;
    void validate() const;
};

/// mean over scales of [mean relu(1 - real) + mean relu(1 + fake)]
template <class T>
Var<T> hinge_loss_d(const std::vector<Var<T>>& real_scores, const std::vector<Var<T>>& fake_scores);

/// mean over scales of -mean(fake)
template <class T>
Var<T> hinge_loss_g(const std::vector<Var<T>>& fake_scores);

/// Mean over (scale, layer) of mean |fake - real|. Real features are detached.
template <class T>
Var<T> feature_matching(const std::vector<std::vector<Var<T>>>& real_feats,
                        const std::vector<std::vector<Var<T>>>& fake_feats);

/// CE + lambda * (1 - soft Jaccard averaged over classes present in target).
/// Statistics pool the whole batch.
template <class T>
Var<T> jaccard_ce_loss(const Var<T>& logits, const Tensor<T>& target_one_hot, double lambda_jaccard = 1.0);

/// Argmax over axis 1: N x C x H x W -> N x H x W labels.
template <class T>
Tensor<std::uint8_t> argmax_labels(const Tensor<T>& logits);

/// 2|P and T| / (|P| + |T|) over pixels labelled c; 1 when both are empty.
double dice_per_class(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target, int c,
                      int n_labels);

/// Unweighted mean of dice_per_class over foreground labels 1..n_labels.
double dice_mean_foreground(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target, int n_labels);

} // namespace redgan
