#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "corrbandit/belief.hpp"
#include "corrbandit/errors.hpp"
#include "corrbandit/gaussian.hpp"

namespace corrbandit {

struct ValueT1 {
    double value = 0.0;
    int arm = 0;
};

// One-step value: take the arm with the largest posterior mean (ties to the
// lowest index).
inline ValueT1 value_t1(const BeliefState& b) {
    ValueT1 out{b.theta()[0], 0};
    for (int i = 1; i < b.size(); ++i)
        if (b.theta()[i] > out.value) out = {b.theta()[i], i};
    return out;
}

// After observing x on `selected`, arm j's posterior mean is affine in x:
//   theta_j(x) = intercept_j + slope_j * x,  slope_j = cov_sj / (cov_ss + s0).
struct DominanceRegion {
    int arm = 0;
    Interval interval;
};

// Which density the pending first observation is integrated against.
// BeliefVariance integrates over N(theta_s, cov_ss), reproducing the worked
// two-ad numbers; PredictiveVariance uses N(theta_s, cov_ss + noise_var),
// the marginal the observation model actually implies.
enum class LookaheadDensity { BeliefVariance, PredictiveVariance };

namespace detail {

struct AffineLine {
    int arm;
    double slope;
    double intercept;
};

inline std::vector<AffineLine> posterior_mean_lines(const BeliefState& b, int selected) {
    const double den = b.cov()(selected, selected) + b.noise_var();
    std::vector<AffineLine> lines;
    lines.reserve(std::size_t(b.size()));
    for (int j = 0; j < b.size(); ++j) {
        const double slope = b.cov()(j, selected) / den;
        lines.push_back({j, slope, b.theta()[j] - slope * b.theta()[selected]});
    }
    return lines;
}

// Upper envelope of affine lines by the monotone-stack sweep. Input lines are
// deduplicated per slope (keep the larger intercept, ties to lowest index);
// output regions are ordered, disjoint up to endpoints, and cover the line.
inline std::vector<DominanceRegion> upper_envelope(std::vector<AffineLine> lines) {
    std::sort(lines.begin(), lines.end(), [](const AffineLine& a, const AffineLine& b) {
        if (a.slope != b.slope) return a.slope < b.slope;
        if (a.intercept != b.intercept) return a.intercept > b.intercept;
        return a.arm < b.arm;
    });
    std::vector<AffineLine> pruned;
    for (const AffineLine& l : lines)
        if (pruned.empty() || pruned.back().slope != l.slope) pruned.push_back(l);

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<AffineLine> stack;
    std::vector<double> from; // x where stack[i] takes over
    for (const AffineLine& l : pruned) {
        while (!stack.empty()) {
            // crossing with the current top; above it the steeper line wins
            const AffineLine& top = stack.back();
            const double x = (top.intercept - l.intercept) / (l.slope - top.slope);
            if (x <= from.back()) {
                stack.pop_back();
                from.pop_back();
            } else {
                stack.push_back(l);
                from.push_back(x);
                break;
            }
        }
        if (stack.empty()) {
            stack.push_back(l);
            from.push_back(-inf);
        }
    }
    std::vector<DominanceRegion> regions;
    regions.reserve(stack.size());
    for (std::size_t i = 0; i < stack.size(); ++i) {
        const double hi = i + 1 < stack.size() ? from[i + 1] : inf;
        regions.push_back({stack[i].arm, {from[i], hi}});
    }
    return regions;
}

inline GaussianParams observation_density(const BeliefState& b, int first, LookaheadDensity d) {
    double var = b.cov()(first, first);
    if (d == LookaheadDensity::PredictiveVariance) var += b.noise_var();
    return {b.theta()[first], var};
}

} // namespace detail

// Partition of the observation axis into regions where one arm's posterior
// mean dominates all others (ties to the lowest arm index).
inline std::vector<DominanceRegion> dominance_regions(const BeliefState& b, int selected) {
    b.check_arm(selected);
    return detail::upper_envelope(detail::posterior_mean_lines(b, selected));
}

// Exact two-step value of playing `first` now and the dominant arm after
// seeing x: theta_first + sum over regions of
//   intercept_j * (cdf(hi) - cdf(lo)) + slope_j * partial_first_moment(lo, hi).
inline double value_t2_branch(const BeliefState& b, int first,
                              LookaheadDensity d = LookaheadDensity::BeliefVariance) {
    b.check_arm(first);
    const auto lines = detail::posterior_mean_lines(b, first);
    const auto regions = detail::upper_envelope(lines);
    const GaussianParams px = detail::observation_density(b, first, d);
    if (!(px.variance > 0.0)) {
        // Certain prior: the observation is theta_first itself.
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& l : lines) best = std::max(best, l.intercept + l.slope * px.mean);
        return b.theta()[first] + best;
    }
    double value = b.theta()[first];
    for (const DominanceRegion& r : regions) {
        const auto& l = lines[std::size_t(r.arm)];
        const double mass = normal_cdf(r.interval.hi, px) - normal_cdf(r.interval.lo, px);
        value += l.intercept * mass + l.slope * partial_first_moment(r.interval, px);
    }
    return value;
}

struct TwoStepPolicy {
    int first_arm = 0;
    double value = 0.0;
    std::vector<DominanceRegion> second_step;
};

// Exact two-step optimum: best first arm (ties to the lowest index) plus the
// dominance regions that decide the second step.
inline TwoStepPolicy value_t2(const BeliefState& b,
                              LookaheadDensity d = LookaheadDensity::BeliefVariance) {
    TwoStepPolicy best;
    best.value = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < b.size(); ++i) {
        const double v = value_t2_branch(b, i, d);
        if (v > best.value) best = {i, v, {}};
    }
    best.second_step = dominance_regions(b, best.first_arm);
    return best;
}

} // namespace corrbandit
