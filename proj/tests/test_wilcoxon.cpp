#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "corrbandit/wilcoxon.hpp"
#include "oracles.hpp"

using namespace corrbandit;
using Pairs = std::vector<std::pair<double, double>>;

TEST_CASE("eight uniformly positive differences give the exact textbook p") {
    Pairs pairs;
    for (int i = 1; i <= 8; ++i) pairs.emplace_back(double(i) + 0.5, double(i) - 0.5);
    const WilcoxonResult r = wilcoxon_signed_rank(pairs);
    CHECK(r.n_used == 8);
    CHECK(r.statistic == 36.0);
    CHECK(r.p_value == 0.0078125);
}

TEST_CASE("statistic at the null center is not significant") {
    Pairs pairs;
    for (int i = 0; i < 6; ++i) pairs.emplace_back(i % 2 == 0 ? 1.0 : 0.0, i % 2 == 0 ? 0.0 : 1.0);
    const WilcoxonResult r = wilcoxon_signed_rank(pairs);
    CHECK(r.p_value == 1.0);
}

TEST_CASE("zero differences are dropped before ranking") {
    Pairs pairs = {{1.0, 1.0}, {2.0, 1.0}, {3.0, 1.0}, {4.0, 1.0}, {5.0, 1.0},
                   {0.5, 1.0}, {7.0, 7.0}};
    const WilcoxonResult r = wilcoxon_signed_rank(pairs);
    CHECK(r.n_used == 5);
    const auto ref = oracles::enumerate_wilcoxon(pairs);
    CHECK(r.statistic == ref.w_plus);
    CHECK_THAT(r.p_value, Catch::Matchers::WithinAbs(ref.p, 1e-12));
}

TEST_CASE("too few informative pairs is an undefined test") {
    Pairs four = {{2.0, 1.0}, {3.0, 1.0}, {4.0, 1.0}, {5.0, 1.0}};
    CHECK_THROWS_AS(wilcoxon_signed_rank(four), UndefinedTestError);
    Pairs all_tied = {{1.0, 1.0}, {2.0, 2.0}, {3.0, 3.0}, {4.0, 4.0}, {5.0, 5.0}, {6.0, 6.0}};
    CHECK_THROWS_AS(wilcoxon_signed_rank(all_tied), UndefinedTestError);
    CHECK_THROWS_AS(wilcoxon_signed_rank(Pairs{}), UndefinedTestError);
}

TEST_CASE("p-value is invariant under negating every pair") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int rep = 0; rep < 50; ++rep) {
        Pairs pairs, negated;
        const int n = 5 + int(rng() % 8);
        for (int i = 0; i < n; ++i) {
            const double a = u(rng), b = u(rng);
            pairs.emplace_back(a, b);
            negated.emplace_back(-a, -b);
        }
        try {
            const WilcoxonResult r1 = wilcoxon_signed_rank(pairs);
            const WilcoxonResult r2 = wilcoxon_signed_rank(negated);
            CHECK(r1.p_value == r2.p_value);
            CHECK(r1.n_used == r2.n_used);
        } catch (const UndefinedTestError&) {
            CHECK_THROWS_AS(wilcoxon_signed_rank(negated), UndefinedTestError);
        }
    }
}

TEST_CASE("swapping pair order mirrors the statistic but keeps the p-value") {
    const std::vector<double> x = {1.1, -0.5, 2.3, 0.7, 1.9, -0.2, 1.4, 0.8};
    Pairs fwd, rev;
    for (double v : x) {
        fwd.emplace_back(v, -v);
        rev.emplace_back(-v, v);
    }
    const WilcoxonResult a = wilcoxon_signed_rank(fwd);
    const WilcoxonResult b = wilcoxon_signed_rank(rev);
    CHECK(a.p_value == b.p_value);
    CHECK(a.statistic + b.statistic == double(a.n_used * (a.n_used + 1)) / 2.0);
}

TEST_CASE("exact path matches full sign enumeration, ties included") {
    std::mt19937_64 rng(211);
    for (int rep = 0; rep < 300; ++rep) {
        const int n = 5 + int(rng() % 8); // 5..12
        Pairs pairs;
        for (int i = 0; i < n; ++i) {
            // lattice differences force duplicate magnitudes (tied ranks)
            const int step = 1 + int(rng() % 4);
            const double sign = (rng() % 2 == 0) ? 1.0 : -1.0;
            pairs.emplace_back(sign * 0.5 * step, 0.0);
        }
        const WilcoxonResult r = wilcoxon_signed_rank(pairs);
        const auto ref = oracles::enumerate_wilcoxon(pairs);
        REQUIRE(r.n_used == ref.n);
        REQUIRE(r.statistic == ref.w_plus);
        REQUIRE_THAT(r.p_value, Catch::Matchers::WithinAbs(ref.p, 1e-12));
    }
}

TEST_CASE("normal approximation is calibrated against sign-flip simulation") {
    // n = 30 forces the approximate branch; the Monte-Carlo estimate of the
    // exact permutation p-value pins it to within a few thousandths.
    std::vector<double> diffs;
    std::mt19937_64 gen(31);
    std::uniform_real_distribution<double> u(0.2, 2.0);
    for (int i = 0; i < 30; ++i) {
        double d = u(gen);
        if (i % 3 == 0) d = -d;
        if (i % 5 == 0) d = 1.0; // tie group
        diffs.push_back(d);
    }
    Pairs pairs;
    for (double d : diffs) pairs.emplace_back(d, 0.0);
    const WilcoxonResult r = wilcoxon_signed_rank(pairs);
    REQUIRE(r.n_used == 30);

    // average ranks of |d|
    std::vector<int> order(diffs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return std::abs(diffs[a]) < std::abs(diffs[b]); });
    std::vector<double> rank(diffs.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && std::abs(diffs[order[j]]) == std::abs(diffs[order[i]])) ++j;
        for (std::size_t k = i; k < j; ++k) rank[order[k]] = 0.5 * double(i + 1 + j);
        i = j;
    }
    double w_obs = 0.0;
    for (std::size_t i = 0; i < diffs.size(); ++i)
        if (diffs[i] > 0) w_obs += rank[i];
    REQUIRE(r.statistic == w_obs);

    std::mt19937_64 mc(77);
    const int trials = 400000;
    int le = 0, ge = 0;
    for (int t = 0; t < trials; ++t) {
        double w = 0.0;
        for (double rk : rank)
            if (mc() % 2 == 0) w += rk;
        if (w <= w_obs + 1e-9) ++le;
        if (w >= w_obs - 1e-9) ++ge;
    }
    const double p_mc =
        std::min(1.0, 2.0 * std::min(double(le) / trials, double(ge) / trials));
    CHECK_THAT(r.p_value, Catch::Matchers::WithinAbs(p_mc, 0.015));
}
