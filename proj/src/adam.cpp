#include "redgan/adam.hpp"

#include <cmath>
#include <string>

namespace redgan {

template <class T>
Adam<T>::Adam(std::vector<Var<T>> params, AdamHyper hyper) : params_(std::move(params)), hyper_(hyper)
{
    if (!(hyper_.lr > 0) || hyper_.beta1 < 0 || hyper_.beta1 >= 1 || hyper_.beta2 < 0 || hyper_.beta2 >= 1 ||
        !(hyper_.eps > 0))
        throw DomainError("invalid Adam hyperparameters");
    for (const auto& p : params_) {
        m_.emplace_back(p.shape());
        v_.emplace_back(p.shape());
    }
}

template <class T>
void Adam<T>::step()
{
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].has_grad() && !all_finite(params_[i].grad().data()))
            throw NumericError("non-finite gradient for parameter " + std::to_string(i) + " at Adam step " +
                               std::to_string(t_ + 1));
    ++t_;
    const double b1 = hyper_.beta1, b2 = hyper_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor<T>& p = params_[i].mutable_value();
        Tensor<T>& m = m_[i];
        Tensor<T>& v = v_[i];
        const T* grad = params_[i].has_grad() ? params_[i].grad().ptr() : nullptr;
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = grad ? static_cast<double>(grad[j]) : 0.0;
            const double mj = b1 * m[j] + (1.0 - b1) * g;
            const double vj = b2 * v[j] + (1.0 - b2) * g * g;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double mhat = mj / c1, vhat = vj / c2;
            p[j] = static_cast<T>(p[j] - hyper_.lr * mhat / (std::sqrt(vhat) + hyper_.eps));
        }
    }
}

template <class T>
void Adam<T>::zero_grad()
{
    for (auto& p : params_) p.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

} // namespace redgan
