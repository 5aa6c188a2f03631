#pragma once

#include <cstdint>
#include <vector>

#include "redgan/autodiff.hpp"

namespace redgan {

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.9;
    double eps = 1e-8;
};

/// Adam with bias correction over a fixed parameter list.
///   m <- b1 m + (1-b1) g ;  v <- b2 v + (1-b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
/// Parameters without an accumulated gradient are treated as g = 0.
template <class T>
class Adam {
public:
    Adam(std::vector<Var<T>> params, AdamHyper hyper);

    /// Throws NumericError before touching anything if a gradient is non-finite.
    void step();
    void zero_grad();

    std::uint64_t steps() const noexcept { return t_; }
    const AdamHyper& hyper() const noexcept { return hyper_; }
    const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
    const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }

private:
    std::vector<Var<T>> params_;
    AdamHyper hyper_;
    std::vector<Tensor<T>> m_, v_;
    std::uint64_t t_ = 0;
};

} // namespace redgan
