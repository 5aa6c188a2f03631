#include "redgan/losses.hpp"

#include <cmath>

namespace redgan {

void LossWeights::validate() const
{
    if (!std::isfinite(lambda_fm) || lambda_fm < 0) throw ConfigError("lambda_fm must be finite and >= 0");
    if (!std::isfinite(lambda_jaccard) || lambda_jaccard < 0)
        throw ConfigError("lambda_jaccard must be finite and >= 0");
}

namespace {

template <class T>
void check_scores(const std::vector<Var<T>>& s, const char* what)
{
    if (s.empty()) throw DomainError(std::string(what) + ": no score maps");
    for (const auto& v : s)
        if (!v.defined() || v.numel() == 0) throw DomainError(std::string(what) + ": empty score map");
}

} // namespace

template <class T>
Var<T> hinge_loss_d(const std::vector<Var<T>>& real, const std::vector<Var<T>>& fake)
{
    check_scores(real, "hinge_loss_d");
    check_scores(fake, "hinge_loss_d");
    if (real.size() != fake.size()) throw DimensionError("hinge_loss_d: scale count differs between real and fake");
    Var<T> total;
    for (std::size_t s = 0; s < real.size(); ++s) {
        Var<T> r = mean(relu(add_scalar(scale(real[s], T(-1)), T(1))));
        Var<T> f = mean(relu(add_scalar(fake[s], T(1))));
        Var<T> term = add(r, f);
        total = total.defined() ? add(total, term) : term;
    }
    return scale(total, T(1) / static_cast<T>(real.size()));
}

template <class T>
Var<T> hinge_loss_g(const std::vector<Var<T>>& fake)
{
    check_scores(fake, "hinge_loss_g");
    Var<T> total;
    for (const auto& f : fake) {
        Var<T> m = mean(f);
        total = total.defined() ? add(total, m) : m;
    }
    return scale(total, T(-1) / static_cast<T>(fake.size()));
}

template <class T>
Var<T> feature_matching(const std::vector<std::vector<Var<T>>>& real, const std::vector<std::vector<Var<T>>>& fake)
{
    if (real.size() != fake.size()) throw DimensionError("feature_matching: scale count differs");
    Var<T> total;
    std::size_t terms = 0;
    for (std::size_t s = 0; s < real.size(); ++s) {
        if (real[s].size() != fake[s].size()) throw DimensionError("feature_matching: layer count differs");
        for (std::size_t l = 0; l < real[s].size(); ++l) {
            if (real[s][l].shape() != fake[s][l].shape())
                throw DimensionError("feature_matching: " + shape_str(real[s][l].shape()) + " vs " +
                                     shape_str(fake[s][l].shape()));
            Var<T> term = mean(abs(sub(fake[s][l], real[s][l].detach())));
            total = total.defined() ? add(total, term) : term;
            ++terms;
        }
    }
    if (terms == 0) throw DomainError("feature_matching: no feature maps");
    return scale(total, T(1) / static_cast<T>(terms));
}

template <class T>
Var<T> jaccard_ce_loss(const Var<T>& logits, const Tensor<T>& target, double lambda_jaccard)
{
    const Shape& s = logits.shape();
    if (s.size() != 4 || target.shape() != s)
        throw DimensionError("jaccard_ce_loss: logits " + shape_str(s) + " vs target " + shape_str(target.shape()));
    const std::size_t n = s[0], c = s[1], plane = s[2] * s[3];
    std::vector<double> present(c, 0.0);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
            T total = 0;
            for (std::size_t k = 0; k < c; ++k) {
                const T t = target[(b * c + k) * plane + i];
                if (t != T(0) && t != T(1)) throw DomainError("jaccard_ce_loss: target is not one-hot");
                total += t;
                if (t == T(1)) present[k] = 1.0;
            }
            if (total != T(1)) throw DomainError("jaccard_ce_loss: target is not one-hot");
        }

    Var<T> t(target);
    Var<T> ce = scale(sum(mul(log_softmax_channels(logits), t)), T(-1) / static_cast<T>(n * plane));
    if (lambda_jaccard == 0) return ce;

    Var<T> p = softmax_channels(logits);
    Var<T> inter = channel_sum(mul(p, t));
    Var<T> union_ = sub(add(channel_sum(p), channel_sum(t)), inter);
    Tensor<T> sel(Shape{c});
    double n_present = 0;
    for (std::size_t k = 0; k < c; ++k) {
        sel[k] = static_cast<T>(present[k]);
        n_present += present[k];
    }
    Var<T> jacc = scale(sum(mul(div(inter, union_), Var<T>(sel))), static_cast<T>(1.0 / n_present));
    Var<T> jl = scale(add_scalar(scale(jacc, T(-1)), T(1)), static_cast<T>(lambda_jaccard));
    return add(ce, jl);
}

template <class T>
Tensor<std::uint8_t> argmax_labels(const Tensor<T>& logits)
{
    if (logits.rank() != 4) throw DimensionError("argmax_labels expects NCHW, got " + shape_str(logits.shape()));
    const std::size_t n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3), plane = h * w;
    if (c > 256) throw DomainError("argmax_labels: too many channels for u8 labels");
    Tensor<std::uint8_t> out(Shape{n, h, w});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
            std::size_t best = 0;
            T bv = logits[(b * c) * plane + i];
            for (std::size_t k = 1; k < c; ++k) {
                const T v = logits[(b * c + k) * plane + i];
                if (v > bv) {
                    bv = v;
                    best = k;
                }
            }
            out[b * plane + i] = static_cast<std::uint8_t>(best);
        }
    return out;
}

double dice_per_class(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target, int c, int n_labels)
{
    if (pred.size() != target.size()) throw DimensionError("dice_per_class: label maps differ in size");
    if (c < 0 || c > n_labels) throw DomainError("dice_per_class: class " + std::to_string(c) + " out of range");
    std::size_t inter = 0, np = 0, nt = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] > n_labels || target[i] > n_labels)
            throw DomainError("dice_per_class: label out of range [0, " + std::to_string(n_labels) + "]");
        const bool p = pred[i] == c, t = target[i] == c;
        np += p;
        nt += t;
        inter += p && t;
    }
    if (np + nt == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(np + nt);
}

double dice_mean_foreground(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target, int n_labels)
{
    if (n_labels < 1) throw DomainError("dice_mean_foreground needs at least one foreground label");
    double acc = 0;
    for (int c = 1; c <= n_labels; ++c) acc += dice_per_class(pred, target, c, n_labels);
    return acc / n_labels;
}

#define REDGAN_LOSSES_INSTANTIATE(T)                                                                          \
    template Var<T> hinge_loss_d<T>(const std::vector<Var<T>>&, const std::vector<Var<T>>&);                  \
    template Var<T> hinge_loss_g<T>(const std::vector<Var<T>>&);                                              \
    template Var<T> feature_matching<T>(const std::vector<std::vector<Var<T>>>&,                              \
                                        const std::vector<std::vector<Var<T>>>&);                             \
    template Var<T> jaccard_ce_loss<T>(const Var<T>&, const Tensor<T>&, double);                              \
    template Tensor<std::uint8_t> argmax_labels<T>(const Tensor<T>&);

REDGAN_LOSSES_INSTANTIATE(float)
REDGAN_LOSSES_INSTANTIATE(double)

} // namespace redgan
