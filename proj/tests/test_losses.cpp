#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "redgan/losses.hpp"
#include "redgan/models.hpp"

using namespace redgan;

namespace {

Var<double> vec(std::vector<double> v)
{
    const std::size_t n = v.size();
    return Var<double>(Tensor<double>(Shape{1, 1, 1, n}, std::move(v)));
}

Var<double> filled(Shape s, double v) { return Var<double>(Tensor<double>(std::move(s), v)); }

} // namespace

TEST(HingeD, Examples)
{
    EXPECT_DOUBLE_EQ(hinge_loss_d<double>({filled({1, 1, 3, 3}, 1.0)}, {filled({1, 1, 3, 3}, -1.0)}).item(), 0.0);
    EXPECT_DOUBLE_EQ(hinge_loss_d<double>({filled({1, 1, 3, 3}, 0.0)}, {filled({1, 1, 3, 3}, 0.0)}).item(), 2.0);
    EXPECT_DOUBLE_EQ(hinge_loss_d<double>({vec({2, -1})}, {vec({0})}).item(), 2.0);
    // two scales are averaged
    EXPECT_DOUBLE_EQ(
        hinge_loss_d<double>({vec({2, -1}), filled({1, 1, 2, 2}, 1.0)}, {vec({0}), filled({1, 1, 2, 2}, -1.0)}).item(),
        1.0);
    EXPECT_THROW(hinge_loss_d<double>({}, {}), DomainError);
}

TEST(HingeD, NonNegativeAndZeroIffMarginsHold)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Var<double> r(oracle::random_tensor(Shape{1, 1, 4, 4}, seed, -3, 3));
        Var<double> f(oracle::random_tensor(Shape{1, 1, 4, 4}, seed + 99, -3, 3));
        EXPECT_GE(hinge_loss_d<double>({r}, {f}).item(), 0.0);
    }
    Var<double> r(oracle::random_tensor(Shape{1, 1, 4, 4}, 1, 1.0, 4.0));
    Var<double> f(oracle::random_tensor(Shape{1, 1, 4, 4}, 2, -4.0, -1.0));
    EXPECT_EQ(hinge_loss_d<double>({r}, {f}).item(), 0.0);
}

TEST(HingeG, Examples)
{
    EXPECT_DOUBLE_EQ(hinge_loss_g<double>({filled({1, 1, 2, 2}, 0.0)}).item(), 0.0);
    EXPECT_DOUBLE_EQ(hinge_loss_g<double>({filled({1, 1, 2, 2}, 1.0)}).item(), -1.0);
    EXPECT_DOUBLE_EQ(hinge_loss_g<double>({vec({1, 3})}).item(), -2.0);
    EXPECT_THROW(hinge_loss_g<double>({}), DomainError);
}

TEST(FeatureMatching, Examples)
{
    auto a = oracle::random_tensor(Shape{2, 3, 4, 4}, 1);
    auto b = oracle::random_tensor(Shape{2, 5, 2, 2}, 2);
    std::vector<std::vector<Var<double>>> real{{Var<double>(a), Var<double>(b)}};
    EXPECT_EQ(feature_matching(real, real).item(), 0.0);
    auto a1 = a, b1 = b;
    for (auto& v : a1.data()) v += 1;
    for (auto& v : b1.data()) v += 1;
    std::vector<std::vector<Var<double>>> fake{{Var<double>(a1), Var<double>(b1)}};
    EXPECT_NEAR(feature_matching(real, fake).item(), 1.0, 1e-12);
}

TEST(FeatureMatching, LoopOracleAndDetachedReal)
{
    std::vector<std::vector<Var<double>>> real, fake;
    std::vector<std::vector<Tensor<double>>> rv, fv;
    std::uint64_t seed = 10;
    for (std::size_t s = 0; s < 2; ++s) {
        real.emplace_back();
        fake.emplace_back();
        for (std::size_t l = 0; l < 2; ++l) {
            Shape sh{2, 3 + l, std::size_t{8} >> s, std::size_t{8} >> s};
            auto r = oracle::random_tensor(sh, seed++), f = oracle::random_tensor(sh, seed++);
            real.back().push_back(Var<double>(r, true));
            fake.back().push_back(Var<double>(f, true));
            rv.push_back({r, f});
        }
    }
    double ref = 0;
    for (const auto& pair : rv) {
        double m = 0;
        for (std::size_t i = 0; i < pair[0].size(); ++i) m += std::abs(pair[1][i] - pair[0][i]);
        ref += m / static_cast<double>(pair[0].size());
    }
    ref /= static_cast<double>(rv.size());
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto loss = feature_matching(real, fake);
    EXPECT_NEAR(loss.item(), ref, 1e-6);
    tape.backward(loss);
    EXPECT_FALSE(real[0][0].has_grad());
    EXPECT_TRUE(fake[0][0].has_grad());
}

TEST(FeatureMatching, ShapeMismatch)
{
    std::vector<std::vector<Var<double>>> a{{filled({1, 2, 2, 2}, 0)}}, b{{filled({1, 2, 4, 4}, 0)}};
    EXPECT_THROW(feature_matching(a, b), DimensionError);
}

TEST(JaccardCe, SaturatedLogitsApproachZero)
{
    Tensor<std::uint8_t> labels(Shape{1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) labels[i] = static_cast<std::uint8_t>(i % 3);
    auto t = one_hot<double>(labels, 2);
    double prev = 1e9;
    for (double margin : {5.0, 20.0, 60.0}) {
        Tensor<double> logits = t;
        for (auto& v : logits.data()) v *= margin;
        const double loss = jaccard_ce_loss(Var<double>(logits), t).item();
        EXPECT_LT(loss, prev);
        prev = loss;
    }
    EXPECT_LT(prev, 1e-12);
}

TEST(JaccardCe, UniformLogitsPixelCountOracle)
{
    const std::size_t S = 6;
    Tensor<std::uint8_t> labels(Shape{1, S, S});
    for (std::size_t i = 0; i < S * S; ++i) labels[i] = i < S * S / 2 ? 0 : 1;
    auto t = one_hot<double>(labels, 1);
    Var<double> logits(Tensor<double>(Shape{1, 2, S, S}, 0.0));
    const double N = S * S, A = N / 2;
    const double jacc = (0.5 * A) / (0.5 * N + A - 0.5 * A);
    EXPECT_NEAR(jaccard_ce_loss(logits, t, 1.0).item(), std::log(2.0) + (1 - jacc), 1e-12);
    EXPECT_NEAR(jaccard_ce_loss(logits, t, 0.0).item(), std::log(2.0), 1e-12);
}

TEST(JaccardCe, RejectsNonOneHotTarget)
{
    Tensor<double> t(Shape{1, 2, 2, 2}, 0.5);
    EXPECT_THROW(jaccard_ce_loss(Var<double>(Tensor<double>(Shape{1, 2, 2, 2})), t), DomainError);
    Tensor<double> z(Shape{1, 2, 2, 2}, 0.0);
    EXPECT_THROW(jaccard_ce_loss(Var<double>(Tensor<double>(Shape{1, 2, 2, 2})), z), DomainError);
}

TEST(Dice, Examples)
{
    const int S = 5;
    std::vector<std::uint8_t> a(S * S, 0), b(S * S, 0);
    for (int y = 1; y < 3; ++y)
        for (int x = 1; x < 3; ++x) {
            a[y * S + x] = 1;
            b[y * S + x + 1] = 1;
        }
    EXPECT_DOUBLE_EQ(dice_per_class(a, b, 1, 2), 0.5);
    EXPECT_DOUBLE_EQ(dice_per_class(a, a, 1, 2), 1.0);
    EXPECT_DOUBLE_EQ(dice_per_class(a, a, 2, 2), 1.0); // both empty
    std::vector<std::uint8_t> c(S * S, 0);
    for (int i = 0; i < 4; ++i) c[20 + i] = 1;
    EXPECT_DOUBLE_EQ(dice_per_class(a, c, 1, 2), 0.0);
    EXPECT_DOUBLE_EQ(dice_mean_foreground(a, b, 2), (0.5 + 1.0) / 2);
    std::vector<std::uint8_t> bad(S * S, 3);
    EXPECT_THROW(dice_per_class(a, bad, 1, 2), DomainError);
}

TEST(Dice, PixelCountOracleOnRandomMaps)
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::uint8_t> p(64), t(64);
        for (auto& v : p) v = static_cast<std::uint8_t>(rng() % 3);
        for (auto& v : t) v = static_cast<std::uint8_t>(rng() % 3);
        for (int c = 0; c <= 2; ++c) {
            int inter = 0, np = 0, nt = 0;
            for (int i = 0; i < 64; ++i) {
                inter += p[i] == c && t[i] == c;
                np += p[i] == c;
                nt += t[i] == c;
            }
            const double ref = np + nt == 0 ? 1.0 : 2.0 * inter / (np + nt);
            const double d = dice_per_class(p, t, c, 2);
            EXPECT_EQ(d, ref);
            EXPECT_EQ(d, dice_per_class(t, p, c, 2));
            EXPECT_GE(d, 0.0);
            EXPECT_LE(d, 1.0);
        }
    }
}

TEST(ArgMax, LabelsInRange)
{
    auto logits = oracle::random_tensor(Shape{2, 3, 4, 4}, 5);
    auto labels = argmax_labels(logits);
    ASSERT_EQ(labels.shape(), (Shape{2, 4, 4}));
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < 16; ++i) {
            const auto l = labels[n * 16 + i];
            ASSERT_LE(l, 2);
            for (std::size_t c = 0; c < 3; ++c) EXPECT_LE(logits[(n * 3 + c) * 16 + i], logits[(n * 3 + l) * 16 + i]);
        }
}
