#include "redgan/selfcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>

#include "redgan/adam.hpp"
#include "redgan/blocks.hpp"
#include "redgan/losses.hpp"
#include "redgan/stats.hpp"

namespace redgan {

using D = double;
using VarD = Var<D>;

GradCheck gradient_check(const std::function<VarD()>& loss, const std::vector<VarD>& leaves, double h)
{
    std::vector<Tensor<D>> analytic;
    {
        for (const auto& l : leaves) {
            if (!l.requires_grad()) throw GraphError("gradient_check: leaf does not require grad");
            const_cast<VarD&>(l).zero_grad();
        }
        Tape<D> tape;
        TapeScope<D> scope(tape);
        VarD out = loss();
        tape.backward(out);
        for (const auto& l : leaves) analytic.push_back(l.has_grad() ? l.grad() : Tensor<D>(l.shape()));
    }
    std::vector<std::vector<D>> numeric(leaves.size());
    double max_num = 0;
    {
        NoGradScope<D> ng;
        for (std::size_t li = 0; li < leaves.size(); ++li) {
            Tensor<D>& v = const_cast<VarD&>(leaves[li]).mutable_value();
            numeric[li].resize(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) {
                const D x0 = v[i];
                v[i] = x0 + h;
                const D fp = loss().item();
                v[i] = x0 - h;
                const D fm = loss().item();
                v[i] = x0;
                numeric[li][i] = (fp - fm) / (2 * h);
                max_num = std::max(max_num, std::abs(numeric[li][i]));
            }
        }
    }
    GradCheck r;
    const double floor = std::max(1e-3 * max_num, 1e-12);
    for (std::size_t li = 0; li < leaves.size(); ++li)
        for (std::size_t i = 0; i < numeric[li].size(); ++i) {
            const double a = analytic[li][i], n = numeric[li][i];
            const double e = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
            if (e > r.max_rel_error) {
                r.max_rel_error = e;
                r.where = "leaf " + std::to_string(li) + " element " + std::to_string(i);
            }
        }
    for (const auto& l : leaves) const_cast<VarD&>(l).zero_grad();
    return r;
}

VarD random_projection(const VarD& out, std::uint64_t seed)
{
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor<D> r(out.shape());
    for (auto& x : r.data()) x = u(rng);
    return sum(mul(out, VarD(std::move(r))));
}

namespace {

// Uniform in [lo, hi], optionally pushed at least `gap` away from `kink`.
Tensor<D> rand_tensor(Rng& rng, Shape s, double lo = -1, double hi = 1, double kink = 0, double gap = 0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<D> t(std::move(s));
    for (auto& x : t.data()) {
        double v = u(rng);
        if (gap > 0 && std::abs(v - kink) < gap) v = kink + (v >= kink ? gap : -gap);
        x = v;
    }
    return t;
}

VarD leaf(Tensor<D> t) { return VarD(std::move(t), true); }

Tensor<D> random_one_hot(Rng& rng, std::size_t n, std::size_t c, std::size_t h, std::size_t w)
{
    std::uniform_int_distribution<std::size_t> pick(0, c - 1);
    Tensor<D> t(Shape{n, c, h, w});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < h * w; ++i) t[(b * c + pick(rng)) * h * w + i] = 1;
    return t;
}

using Unary = VarD (*)(const VarD&);

GradCase unary(std::string name, Unary f, double lo, double hi, double gap = 0)
{
    return {name, "primitive", [f, lo, hi, gap](std::uint64_t seed) {
                Rng rng(seed);
                VarD a = leaf(rand_tensor(rng, {2, 3, 2, 2}, lo, hi, 0, gap));
                return GradProblem{[a, f, seed] { return random_projection(f(a), seed + 1); }, {a}};
            }};
}

template <class F>
GradCase binary(std::string name, F f, double blo = -1, double bhi = 1)
{
    return {name, "primitive", [f, blo, bhi](std::uint64_t seed) {
                Rng rng(seed);
                VarD a = leaf(rand_tensor(rng, {2, 3})), b = leaf(rand_tensor(rng, {2, 3}, blo, bhi));
                VarD s = leaf(rand_tensor(rng, {1}, blo, bhi));
                return GradProblem{[a, b, s, f, seed] {
                                       return add(random_projection(f(a, b), seed + 1),
                                                  random_projection(f(a, s), seed + 2));
                                   },
                                   {a, b, s}};
            }};
}

// Layer objects live in a shared holder captured by the loss closure.
struct LayerHolder {
    ParamStore<D> store;
    Conv2dLayer<D> conv;
    SpadeNorm<D> spade;
    SpadeResBlock<D> block;
    ClassEmbedding<D> embed;
};

std::vector<VarD> with_params(const ParamStore<D>& store, std::vector<VarD> extra)
{
    auto p = store.params();
    extra.insert(extra.end(), p.begin(), p.end());
    return extra;
}

// Gives every bias a non-zero value so its gradient path is exercised.
void jitter_params(ParamStore<D>& store, Rng& rng)
{
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (auto& [name, v] : store.param_entries())
        if (name.size() > 5 && name.compare(name.size() - 5, 5, ".bias") == 0)
            for (auto& x : const_cast<VarD&>(v).mutable_value().data()) x += u(rng);
}

std::vector<GradCase> build_cases()
{
    std::vector<GradCase> c;
    c.push_back(binary("add", [](const VarD& a, const VarD& b) { return add(a, b); }));
    c.push_back(binary("sub", [](const VarD& a, const VarD& b) { return sub(a, b); }));
    c.push_back(binary("mul", [](const VarD& a, const VarD& b) { return mul(a, b); }));
    c.push_back(binary("div", [](const VarD& a, const VarD& b) { return div(a, b); }, 0.5, 1.5));
    c.push_back(unary("scale", [](const VarD& a) { return scale(a, 1.7); }, -1, 1));
    c.push_back(unary("add_scalar", [](const VarD& a) { return add_scalar(a, 0.3); }, -1, 1));
    c.push_back({"matmul", "primitive", [](std::uint64_t seed) {
                     Rng rng(seed);
                     VarD a = leaf(rand_tensor(rng, {3, 4})), b = leaf(rand_tensor(rng, {4, 2}));
                     return GradProblem{[a, b, seed] { return random_projection(matmul(a, b), seed + 1); }, {a, b}};
                 }});
    c.push_back({"conv2d", "primitive", [](std::uint64_t seed) {
                     Rng rng(seed);
                     VarD x = leaf(rand_tensor(rng, {2, 3, 5, 5})), w = leaf(rand_tensor(rng, {4, 3, 3, 3}));
                     VarD b = leaf(rand_tensor(rng, {4}));
                     VarD w1 = leaf(rand_tensor(rng, {2, 3, 1, 1}));
                     return GradProblem{[x, w, b, w1, seed] {
                                            return add(random_projection(conv2d(x, w, b, 2, 1), seed + 1),
                                                       random_projection(conv2d(x, w1, VarD(), 1, 0), seed + 2));
                                        },
                                        {x, w, b, w1}};
                 }});
    c.push_back({"reshape", "primitive", [](std::uint64_t seed) {
                     Rng rng(seed);
                     VarD a = leaf(rand_tensor(rng, {2, 6}));
                     return GradProblem{[a, seed] { return random_projection(reshape(a, Shape{3, 4}), seed + 1); }, {a}};
                 }});
    c.push_back({"transpose", "primitive", [](std::uint64_t seed) {
                     Rng rng(seed);
                     VarD a = leaf(rand_tensor(rng, {3, 5}));
                     return GradProblem{[a, seed] { return random_projection(transpose(a), seed + 1); }, {a}};
                 }});
    c.push_back({"concat", "primitive", [](std::uint64_t seed) {
                     Rng rng(seed);
                     VarD a = leaf(rand_tensor(rng, {2, 1, 3, 3})), b = leaf(rand_tensor(rng, {2, 2, 3, 3}));
                     return GradProblem{[a, b, seed] { return random_projection(concat_channels<D>({a, b}), seed + 1); },
                                        {a, b}};
                 }});
    c.push_back(unary("relu", [](const VarD& a) { return relu(a); }, -1, 1, 0.05));
    c.push_back(unary("leaky_relu", [](const VarD& a) { return leaky_relu(a, 0.2); }, -1, 1, 0.05));
    c.push_back(unary("tanh", [](const VarD& a) { return tanh(a); }, -2, 2));
    c.push_back(unary("sigmoid", [](const VarD& a) { return sigmoid(a); }, -3, 3));
    c.push_back(unary("softmax", [](const VarD& a) { return softmax_channels(a); }, -2, 2));
    c.push_back(unary("log_softmax", [](const VarD& a) { return log_softmax_channels(a); }, -2, 2));
    c.push_back(unary("log", [](const VarD& a) { return log(a); }, 0.5, 2));
    c.push_back(unary("exp", [](const VarD& a) { return exp(a); }, -1, 1));
    c.push_back(unary("abs", [](const VarD& a) { return abs(a); }, -1, 1, 0.05));
    c.push_back(unary("mean", [](const VarD& a) { return scale(mean(a), 3.0); }, -1, 1));
    c.push_back(unary("sum", [](const VarD& a) { return scale(sum(a), 0.5); }, -1, 1));
    c.push_back(unary("channel_sum", [](const VarD& a) { return channel_sum(a); }, -1, 1));
    c.push_back({"avg_pool2d", "primitive", [](std::uint64_t seed) {
                     Rng rng(seed);
                     VarD a = leaf(rand_tensor(rng, {1, 2, 4, 4}));
                     return GradProblem{[a, seed] {
                                            return add(random_projection(avg_pool2d(a, 2, 2), seed + 1),
                                                       random_projection(avg_pool2d(a, 3, 1), seed + 2));
                                        },
                                        {a}};
                 }});
    c.push_back(unary("upsample_nearest2x", [](const VarD& a) { return upsample_nearest2x(a); }, -1, 1));
    c.push_back({"embedding", "primitive", [](std::uint64_t seed) {
                     Rng rng(seed);
                     VarD t = leaf(rand_tensor(rng, {4, 3}));
                     return GradProblem{[t, seed] {
                                            const int ids[] = {1, 3, 1};
                                            return random_projection(embedding(t, std::span<const int>(ids)), seed + 1);
                                        },
                                        {t}};
                 }});
    c.push_back({"instance_norm", "primitive", [](std::uint64_t seed) {
                     Rng rng(seed);
                     VarD a = leaf(rand_tensor(rng, {2, 3, 3, 3}));
                     return GradProblem{[a, seed] { return random_projection(instance_norm(a), seed + 1); }, {a}};
                 }});
    c.push_back({"bias_add", "primitive", [](std::uint64_t seed) {
                     Rng rng(seed);
                     VarD a = leaf(rand_tensor(rng, {2, 3, 2, 2})), b = leaf(rand_tensor(rng, {3}));
                     return GradProblem{[a, b, seed] { return random_projection(bias_add(a, b), seed + 1); }, {a, b}};
                 }});

    // composite layers
    c.push_back({"conv_layer", "layer", [](std::uint64_t seed) {
                     Rng rng(seed);
                     auto h = std::make_shared<LayerHolder>();
                     h->conv = Conv2dLayer<D>(h->store, "conv", 3, 4, ConvOptions{3, 1, 1, true, false}, rng);
                     jitter_params(h->store, rng);
                     VarD x = leaf(rand_tensor(rng, {2, 3, 4, 4}));
                     return GradProblem{[h, x, seed] { return random_projection(h->conv.forward(x), seed + 1); },
                                        with_params(h->store, {x})};
                 }});
    c.push_back({"spectral_conv", "layer", [](std::uint64_t seed) {
                     Rng rng(seed);
                     auto h = std::make_shared<LayerHolder>();
                     h->conv = Conv2dLayer<D>(h->store, "conv", 3, 4, ConvOptions{4, 2, 1, true, true}, rng);
                     jitter_params(h->store, rng);
                     VarD x = leaf(rand_tensor(rng, {1, 3, 6, 6}));
                     return GradProblem{[h, x, seed] { return random_projection(h->conv.forward(x), seed + 1); },
                                        with_params(h->store, {x})};
                 }});
    c.push_back({"spade_normalize", "layer", [](std::uint64_t seed) {
                     Rng rng(seed);
                     auto h = std::make_shared<LayerHolder>();
                     h->spade = SpadeNorm<D>(h->store, "spade", "", 3, 2, 4, rng);
                     jitter_params(h->store, rng);
                     VarD x = leaf(rand_tensor(rng, {2, 2, 4, 4}));
                     VarD m(random_one_hot(rng, 2, 3, 4, 4));
                     return GradProblem{[h, x, m, seed] { return random_projection(h->spade.forward(x, m), seed + 1); },
                                        with_params(h->store, {x})};
                 }});
    c.push_back({"embed_class", "layer", [](std::uint64_t seed) {
                     Rng rng(seed);
                     auto h = std::make_shared<LayerHolder>();
                     h->embed = ClassEmbedding<D>(h->store, "embed", 3, 4, 2, 2, rng);
                     jitter_params(h->store, rng);
                     return GradProblem{[h, seed] {
                                            const int ids[] = {2, 0};
                                            return random_projection(h->embed.forward(std::span<const int>(ids)),
                                                                     seed + 1);
                                        },
                                        h->store.params()};
                 }});
    for (auto [cin, cout] : {std::pair<std::size_t, std::size_t>{3, 2}, {2, 2}}) {
        const std::string name = cin == cout ? "spade_resblock" : "spade_resblock_learned_skip";
        c.push_back({name, "layer", [cin, cout](std::uint64_t seed) {
                         Rng rng(seed);
                         auto h = std::make_shared<LayerHolder>();
                         h->block = SpadeResBlock<D>(h->store, "block", 3, cin, cout, 3, rng);
                         jitter_params(h->store, rng);
                         VarD x = leaf(rand_tensor(rng, {1, cin, 4, 4}));
                         VarD m(random_one_hot(rng, 1, 3, 4, 4));
                         return GradProblem{
                             [h, x, m, seed] { return random_projection(h->block.forward(x, m), seed + 1); },
                             with_params(h->store, {x})};
                     }});
    }

    // losses
    c.push_back({"hinge_loss_d", "loss", [](std::uint64_t seed) {
                     Rng rng(seed);
                     VarD r1 = leaf(rand_tensor(rng, {1, 1, 3, 3}, -1, 3, 1, 0.05));
                     VarD r2 = leaf(rand_tensor(rng, {1, 1, 2, 2}, -1, 3, 1, 0.05));
                     VarD f1 = leaf(rand_tensor(rng, {1, 1, 3, 3}, -3, 1, -1, 0.05));
                     VarD f2 = leaf(rand_tensor(rng, {1, 1, 2, 2}, -3, 1, -1, 0.05));
                     return GradProblem{[=] { return hinge_loss_d<D>({r1, r2}, {f1, f2}); }, {r1, r2, f1, f2}};
                 }});
    c.push_back({"hinge_loss_g", "loss", [](std::uint64_t seed) {
                     Rng rng(seed);
                     VarD f1 = leaf(rand_tensor(rng, {1, 1, 3, 3})), f2 = leaf(rand_tensor(rng, {1, 1, 2, 2}));
                     return GradProblem{[=] { return hinge_loss_g<D>({f1, f2}); }, {f1, f2}};
                 }});
    c.push_back({"feature_matching", "loss", [](std::uint64_t seed) {
                     Rng rng(seed);
                     Tensor<D> r1 = rand_tensor(rng, {1, 2, 3, 3}), r2 = rand_tensor(rng, {1, 3, 2, 2});
                     Tensor<D> o1 = rand_tensor(rng, r1.shape(), -1, 1, 0, 0.05);
                     Tensor<D> o2 = rand_tensor(rng, r2.shape(), -1, 1, 0, 0.05);
                     for (std::size_t i = 0; i < o1.size(); ++i) o1[i] += r1[i];
                     for (std::size_t i = 0; i < o2.size(); ++i) o2[i] += r2[i];
                     VarD f1 = leaf(o1), f2 = leaf(o2);
                     VarD a(r1), b(r2);
                     return GradProblem{[=] { return feature_matching<D>({{a, b}}, {{f1, f2}}); }, {f1, f2}};
                 }});
    c.push_back({"jaccard_ce_loss", "loss", [](std::uint64_t seed) {
                     Rng rng(seed);
                     VarD logits = leaf(rand_tensor(rng, {2, 3, 3, 3}, -2, 2));
                     const Tensor<D> target = random_one_hot(rng, 2, 3, 3, 3);
                     return GradProblem{[=] { return jaccard_ce_loss(logits, target, 1.0); }, {logits}};
                 }});
    return c;
}

// --- oracles -----------------------------------------------------------------

double conv_oracle_error(Rng& rng)
{
    std::uniform_int_distribution<int> dim(1, 4), sp(3, 7), k(1, 3), st(1, 2), pd(0, 1);
    const std::size_t n = dim(rng), ci = dim(rng), co = dim(rng), H = sp(rng), W = sp(rng), kh = k(rng), kw = k(rng);
    const std::size_t stride = st(rng), pad = pd(rng);
    Tensor<D> x = rand_tensor(rng, {n, ci, H, W}), w = rand_tensor(rng, {co, ci, kh, kw}), b = rand_tensor(rng, {co});
    const Tensor<D> y = conv2d(VarD(x), VarD(w), VarD(b), stride, pad).value();
    const std::size_t oh = (H + 2 * pad - kh) / stride + 1, ow = (W + 2 * pad - kw) / stride + 1;
    double err = 0;
    for (std::size_t bn = 0; bn < n; ++bn)
        for (std::size_t o = 0; o < co; ++o)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = b[o];
                    for (std::size_t c = 0; c < ci; ++c)
                        for (std::size_t ky = 0; ky < kh; ++ky)
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                                acc += x[((bn * ci + c) * H + iy) * W + ix] * w[((o * ci + c) * kh + ky) * kw + kx];
                            }
                    err = std::max(err, std::abs(acc - y[((bn * co + o) * oh + oy) * ow + ox]));
                }
    return err;
}

// Brute force over all 2^n sign patterns with ranks recomputed from scratch.
double wilcoxon_brute_p(const std::vector<double>& a, const std::vector<double>& b)
{
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) d.push_back(a[i] - b[i]);
    const std::size_t n = d.size();
    if (n == 0) return 1.0;
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        double less = 0, eq = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(d[j]) < std::abs(d[i])) ++less;
            if (std::abs(d[j]) == std::abs(d[i])) ++eq;
        }
        rank[i] = less + (eq + 1) / 2.0;
    }
    double wp = 0, wm = 0;
    for (std::size_t i = 0; i < n; ++i) (d[i] > 0 ? wp : wm) += rank[i];
    const double w = std::min(wp, wm);
    std::size_t hits = 0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1) s += rank[i];
        if (s <= w + 1e-9) ++hits;
    }
    return std::min(1.0, 2.0 * static_cast<double>(hits) / std::ldexp(1.0, static_cast<int>(n)));
}

// Largest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
double jacobi_max_eigen(std::vector<double> a, std::size_t n)
{
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p * n + q]) < 1e-300) continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2 * a[p * n + q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
                const double cs = 1 / std::sqrt(t * t + 1), sn = t * cs;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = cs * akp - sn * akq;
                    a[k * n + q] = sn * akp + cs * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = cs * apk - sn * aqk;
                    a[q * n + k] = sn * apk + cs * aqk;
                }
            }
    }
    double m = a[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, a[i * n + i]);
    return m;
}

template <class F>
SuiteResult timed(const std::string& name, F body)
{
    SuiteResult r;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(r);
    } catch (const std::exception& e) {
        r.failures.push_back(std::string("exception: ") + e.what());
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.passed = r.failures.empty();
    return r;
}

std::string fmt(double v)
{
    std::ostringstream os;
    os << v;
    return os.str();
}

} // namespace

const std::vector<GradCase>& gradient_cases()
{
    static const std::vector<GradCase> cases = build_cases();
    return cases;
}

bool SelfcheckReport::passed() const
{
    return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed; });
}

SelfcheckReport run_selfcheck(std::size_t seeds, const std::function<void(const SuiteResult&)>& on_suite)
{
    SelfcheckReport rep;
    auto push = [&](SuiteResult r) {
        if (on_suite) on_suite(r);
        rep.suites.push_back(std::move(r));
    };

    for (const char* cat : {"primitive", "layer", "loss"})
        push(timed(std::string("gradcheck-") + cat, [&](SuiteResult& r) {
            for (const auto& gc : gradient_cases()) {
                if (gc.category != cat) continue;
                double worst = 0;
                for (std::size_t s = 0; s < seeds; ++s) {
                    const GradProblem p = gc.make(1000 + s);
                    worst = std::max(worst, gradient_check(p.loss, p.leaves).max_rel_error);
                }
                if (!(worst <= kGradTolerance))
                    r.failures.push_back(gc.name + ": max relative error " + fmt(worst));
            }
        }));

    push(timed("conv-oracle", [](SuiteResult& r) {
        Rng rng(7);
        for (int i = 0; i < 20; ++i)
            if (double e = conv_oracle_error(rng); e > 1e-9) r.failures.push_back("conv2d: forward error " + fmt(e));
    }));

    push(timed("dice-oracle", [](SuiteResult& r) {
        Rng rng(8);
        std::uniform_int_distribution<int> lab(0, 2);
        for (int t = 0; t < 50; ++t) {
            std::vector<std::uint8_t> p(64), q(64);
            for (auto& x : p) x = static_cast<std::uint8_t>(lab(rng));
            for (auto& x : q) x = static_cast<std::uint8_t>(lab(rng));
            for (int c = 0; c <= 2; ++c) {
                std::size_t inter = 0, np = 0, nq = 0;
                for (std::size_t i = 0; i < 64; ++i) {
                    inter += p[i] == c && q[i] == c;
                    np += p[i] == c;
                    nq += q[i] == c;
                }
                const double want = np + nq ? 2.0 * inter / static_cast<double>(np + nq) : 1.0;
                if (dice_per_class(p, q, c, 2) != want) r.failures.push_back("dice: mismatch for class " + fmt(c));
            }
        }
        // 2x2 block vs the same block shifted one column in a 4x4 map
        std::vector<std::uint8_t> a(16), b(16);
        for (int y = 1; y <= 2; ++y)
            for (int x = 0; x <= 1; ++x) {
                a[y * 4 + x] = 1;
                b[y * 4 + x + 1] = 1;
            }
        if (dice_per_class(a, b, 1, 1) != 0.5) r.failures.push_back("dice: shifted block is not 0.5");
    }));

    push(timed("wilcoxon-oracle", [](SuiteResult& r) {
        Rng rng(9);
        std::uniform_int_distribution<int> len(1, 10), small(-3, 3);
        for (int t = 0; t < 100; ++t) {
            const int n = len(rng);
            std::vector<double> a(n), b(n);
            for (int i = 0; i < n; ++i) {
                a[i] = small(rng) * 0.5; // coarse grid forces ties and zeros
                b[i] = small(rng) * 0.5;
            }
            const double want = wilcoxon_brute_p(a, b);
            const double got = wilcoxon_signed_rank(a, b, WilcoxonMethod::Exact).p_two_sided;
            if (std::abs(want - got) > 1e-12) r.failures.push_back("wilcoxon: p " + fmt(got) + " vs " + fmt(want));
        }
    }));

    push(timed("spectral-oracle", [](SuiteResult& r) {
        Rng rng(10);
        for (int t = 0; t < 3; ++t) {
            Tensor<D> w = rand_tensor(rng, {8, 24});
            SpectralState<D> st;
            Tensor<D> u(Shape{8});
            for (auto& x : u.data()) x = 1.0 / std::sqrt(8.0);
            st.u = VarD(u);
            st.v = VarD(Tensor<D>(Shape{24}));
            const double sigma = spectral_power_iterate(w, st, 1000);
            std::vector<double> gram(24 * 24);
            for (std::size_t i = 0; i < 24; ++i)
                for (std::size_t j = 0; j < 24; ++j)
                    for (std::size_t k = 0; k < 8; ++k) gram[i * 24 + j] += w[k * 24 + i] * w[k * 24 + j];
            const double truth = std::sqrt(jacobi_max_eigen(gram, 24));
            if (std::abs(sigma - truth) > 0.01 * truth)
                r.failures.push_back("spectral norm: " + fmt(sigma) + " vs " + fmt(truth));
        }
    }));

    push(timed("adam-oracle", [](SuiteResult& r) {
        // f(p) = (p - 3)^2 from p = 0; GAN betas
        VarD p(Tensor<D>(Shape{1}, 0.0), true);
        Adam<D> opt({p}, AdamHyper{1e-1, 0.0, 0.9, 1e-8});
        double q = 0, m = 0, v = 0;
        for (int t = 1; t <= 10; ++t) {
            {
                Tape<D> tape;
                TapeScope<D> scope(tape);
                VarD d = add_scalar(p, -3.0);
                tape.backward(mul(d, d));
            }
            opt.step();
            opt.zero_grad();
            const double g = 2 * (q - 3);
            m = 0.0 * m + 1.0 * g;
            v = 0.9 * v + 0.1 * g * g;
            const double mh = m / (1 - std::pow(0.0, t)), vh = v / (1 - std::pow(0.9, t));
            q -= 1e-1 * mh / (std::sqrt(vh) + 1e-8);
            if (std::abs(q - p.value()[0]) > 1e-12)
                r.failures.push_back("adam: step " + fmt(t) + " " + fmt(p.value()[0]) + " vs " + fmt(q));
        }
    }));
    return rep;
}

} // namespace redgan
