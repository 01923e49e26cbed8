#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "corrbandit/errors.hpp"
#include "corrbandit/gaussian.hpp"

namespace corrbandit {

struct WilcoxonResult {
    double statistic = 0.0; // W+ = sum of ranks of positive differences
    double p_value = 1.0;   // two-sided
    int n_used = 0;         // pairs remaining after dropping zero differences
};

namespace detail {

// Exact null distribution of 2*W+ by subset-sum DP over doubled ranks
// (average ranks are half-integers, so doubling keeps everything integral).
// Returns P(W+ <= w) and P(W+ >= w).
inline std::pair<double, double> exact_tail_probs(const std::vector<double>& ranks, double w) {
    int total2 = 0;
    for (double r : ranks) total2 += int(std::lround(2.0 * r));
    std::vector<double> ways(std::size_t(total2) + 1, 0.0);
    ways[0] = 1.0;
    int reach = 0;
    for (double r : ranks) {
        const int r2 = int(std::lround(2.0 * r));
        reach += r2;
        for (int s = reach; s >= r2; --s) ways[std::size_t(s)] += ways[std::size_t(s - r2)];
    }
    const double denom = std::ldexp(1.0, int(ranks.size())); // 2^n, exact for n <= 25
    const int w2 = int(std::lround(2.0 * w));
    double below = 0.0, above = 0.0;
    for (int s = 0; s <= total2; ++s) {
        if (s <= w2) below += ways[std::size_t(s)];
        if (s >= w2) above += ways[std::size_t(s)];
    }
    return {below / denom, above / denom};
}

} // namespace detail

// Two-sided Wilcoxon signed-rank test on paired observations.
// Zero differences are dropped; ties among |differences| share average ranks.
// n <= 25 uses the exact permutation distribution, larger n the normal
// approximation with continuity and tie corrections.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<std::pair<double, double>>& pairs) {
    std::vector<double> diffs;
    diffs.reserve(pairs.size());
    for (const auto& [a, b] : pairs) {
        const double d = a - b;
        if (!std::isfinite(d)) throw DomainError("wilcoxon_signed_rank: non-finite difference");
        if (d != 0.0) diffs.push_back(d);
    }
    if (diffs.empty())
        throw UndefinedTestError("wilcoxon_signed_rank: all pairs are tied");
    if (diffs.size() < 5)
        throw UndefinedTestError("wilcoxon_signed_rank: fewer than 5 informative pairs");

    const int n = int(diffs.size());
    std::vector<int> order(diffs.size());
    for (int i = 0; i < n; ++i) order[std::size_t(i)] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return std::fabs(diffs[std::size_t(a)]) < std::fabs(diffs[std::size_t(b)]);
    });

    std::vector<double> rank(diffs.size(), 0.0);
    double tie_correction = 0.0; // sum over tie groups of (t^3 - t)
    for (int i = 0; i < n;) {
        int j = i;
        while (j < n && std::fabs(diffs[std::size_t(order[std::size_t(j)])]) ==
                            std::fabs(diffs[std::size_t(order[std::size_t(i)])]))
            ++j;
        const double avg = 0.5 * double(i + j - 1) + 1.0; // average of ranks i+1 .. j
        for (int k = i; k < j; ++k) rank[std::size_t(order[std::size_t(k)])] = avg;
        const double t = double(j - i);
        tie_correction += t * t * t - t;
        i = j;
    }

    WilcoxonResult res;
    res.n_used = n;
    std::vector<double> all_ranks(rank.begin(), rank.end());
    for (int i = 0; i < n; ++i)
        if (diffs[std::size_t(i)] > 0.0) res.statistic += rank[std::size_t(i)];

    if (n <= 25) {
        auto [below, above] = detail::exact_tail_probs(all_ranks, res.statistic);
        res.p_value = std::min(1.0, 2.0 * std::min(below, above));
    } else {
        const double mean = double(n) * double(n + 1) / 4.0;
        const double var =
            double(n) * double(n + 1) * double(2 * n + 1) / 24.0 - tie_correction / 48.0;
        const double dev = std::max(0.0, std::fabs(res.statistic - mean) - 0.5);
        const double z = dev / std::sqrt(var);
        res.p_value = std::min(1.0, std::erfc(z * detail::inv_sqrt_2));
    }
    return res;
}

} // namespace corrbandit
