#pragma once

// Paired Wilcoxon signed-rank test and mean/std summaries.

#include <cstddef>
#include <span>

namespace redgan {

enum class WilcoxonMethod { Auto, Exact, Normal };

struct WilcoxonResult {
    double w = 0;       // min(W+, W-)
    double w_plus = 0;  // rank sum of positive differences a - b
    double w_minus = 0;
    std::size_t n = 0;  // non-zero differences
    double p_two_sided = 1;
    bool exact = true;
};

/// Zero differences are dropped, tied |d| get average ranks. Auto uses exact
/// enumeration when n <= kWilcoxonExactMax, else the normal approximation
/// with tie and continuity correction.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    WilcoxonMethod method = WilcoxonMethod::Auto);

constexpr std::size_t kWilcoxonExactMax = 20;

struct Summary {
    double mean = 0;
    double std = 0; // n - 1 denominator; 0 for a single value
};

Summary summarize(std::span<const double> values);

} // namespace redgan
