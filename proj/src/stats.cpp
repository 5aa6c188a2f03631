#include "redgan/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "redgan/errors.hpp"

namespace redgan {

namespace {

// Counts sign assignments whose positive rank sum is <= limit. Ranks are
// doubled so tie averages stay integral; the walk is in Gray-code order so
// each step flips one sign.
std::uint64_t count_at_most(const std::vector<std::int64_t>& ranks2, std::int64_t limit)
{
    const std::size_t n = ranks2.size();
    const std::uint64_t total = std::uint64_t{1} << n;
    std::uint64_t count = 0;
    std::int64_t s = 0;
    std::uint64_t prev = 0;
    for (std::uint64_t i = 0; i < total; ++i) {
        const std::uint64_t g = i ^ (i >> 1);
        if (i) {
            const std::uint64_t flip = g ^ prev;
            const auto bit = static_cast<std::size_t>(__builtin_ctzll(flip));
            s += (g & flip) ? ranks2[bit] : -ranks2[bit];
        }
        prev = g;
        count += s <= limit;
    }
    return count;
}

} // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, WilcoxonMethod method)
{
    if (a.size() != b.size())
        throw DimensionError("wilcoxon: samples differ in length (" + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()) + ")");
    if (a.empty()) throw DomainError("wilcoxon: empty sample");
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw NumericError("wilcoxon: non-finite score");
        const double x = a[i] - b[i];
        if (x != 0.0) d.push_back(x);
    }
    WilcoxonResult r;
    r.n = d.size();
    if (d.empty()) return r;

    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
    std::vector<std::int64_t> ranks2(d.size());
    double tie_term = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
        const auto rank2 = static_cast<std::int64_t>(i + 1 + j + 1); // twice the average rank
        for (std::size_t k = i; k <= j; ++k) ranks2[order[k]] = rank2;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    std::int64_t wp2 = 0, wm2 = 0;
    for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? wp2 : wm2) += ranks2[i];
    r.w_plus = wp2 / 2.0;
    r.w_minus = wm2 / 2.0;
    r.w = std::min(r.w_plus, r.w_minus);

    const bool exact = method == WilcoxonMethod::Exact || (method == WilcoxonMethod::Auto && r.n <= kWilcoxonExactMax);
    r.exact = exact;
    if (exact) {
        if (r.n > 28) throw DomainError("wilcoxon: exact enumeration limited to n <= 28");
        const std::uint64_t c = count_at_most(ranks2, std::min(wp2, wm2));
        r.p_two_sided = std::min(1.0, 2.0 * static_cast<double>(c) / std::ldexp(1.0, static_cast<int>(r.n)));
        return r;
    }
    const double n = static_cast<double>(r.n);
    const double mu = n * (n + 1) / 4.0;
    const double var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0;
    if (var <= 0) {
        r.p_two_sided = 1.0;
        return r;
    }
    const double z = std::max(0.0, std::abs(r.w - mu) - 0.5) / std::sqrt(var);
    r.p_two_sided = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return r;
}

Summary summarize(std::span<const double> values)
{
    if (values.empty()) throw DomainError("summarize: empty list");
    Summary s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

} // namespace redgan
