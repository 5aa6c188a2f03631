#pragma once

// Runtime self-check: finite-difference gradient checks and oracle suites in
// 64-bit. Backs the `selfcheck` command.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "redgan/autodiff.hpp"

namespace redgan {

struct GradCheck {
    double max_rel_error = 0;
    std::string where; // leaf index and element of the worst error
};

/// Central differences (step h) of the scalar `loss` w.r.t. every element of
/// every leaf, compared with one reverse pass. Per-element error is
/// |a - n| / max(|a|, |n|, 1e-3 * max|n|).
GradCheck gradient_check(const std::function<Var<double>()>& loss, const std::vector<Var<double>>& leaves,
                         double h = 1e-5);

/// sum(out * R) with R ~ U(-1, 1) drawn from `seed`: a scalar whose gradient
/// exercises every output element.
Var<double> random_projection(const Var<double>& out, std::uint64_t seed);

struct GradProblem {
    std::function<Var<double>()> loss; // captures whatever it needs
    std::vector<Var<double>> leaves;
};

struct GradCase {
    std::string name;     // primitive, layer or loss name
    std::string category; // "primitive", "layer" or "loss"
    std::function<GradProblem(std::uint64_t seed)> make;
};

/// Every primitive, composite layer and loss with small random instances.
const std::vector<GradCase>& gradient_cases();

struct SuiteResult {
    std::string name;
    bool passed = true;
    double seconds = 0;
    std::vector<std::string> failures;
};

struct SelfcheckReport {
    std::vector<SuiteResult> suites;
    bool passed() const;
};

constexpr double kGradTolerance = 1e-5;

/// `seeds` random instances per gradient case.
SelfcheckReport run_selfcheck(std::size_t seeds = 5, const std::function<void(const SuiteResult&)>& on_suite = {});

} // namespace redgan
