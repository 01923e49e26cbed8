#pragma once

#include <cmath>
#include <limits>

#include "corrbandit/errors.hpp"

namespace corrbandit {

struct GaussianParams {
    double mean = 0.0;
    double variance = 1.0;
};

// Closed interval of the real line; either endpoint may be infinite.
struct Interval {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
};

namespace detail {

inline void check_params(const GaussianParams& p) {
    if (!std::isfinite(p.mean)) throw DomainError("gaussian: mean must be finite");
    if (!(p.variance > 0.0) || !std::isfinite(p.variance))
        throw DomainError("gaussian: variance must be positive and finite");
}

inline constexpr double inv_sqrt_2pi = 0.3989422804014326779;
inline constexpr double inv_sqrt_2 = 0.7071067811865475244;

} // namespace detail

inline double normal_pdf(double x, const GaussianParams& p) {
    detail::check_params(p);
    if (std::isnan(x)) throw DomainError("normal_pdf: x is NaN");
    if (std::isinf(x)) return 0.0;
    const double sd = std::sqrt(p.variance);
    const double z = (x - p.mean) / sd;
    return detail::inv_sqrt_2pi / sd * std::exp(-0.5 * z * z);
}

inline double normal_cdf(double x, const GaussianParams& p) {
    detail::check_params(p);
    if (std::isnan(x)) throw DomainError("normal_cdf: x is NaN");
    if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
    const double z = (x - p.mean) / std::sqrt(p.variance);
    // erfc keeps full relative accuracy in the tails.
    return 0.5 * std::erfc(-z * detail::inv_sqrt_2);
}

// int_lo^hi x p(x) dx for p = N(mean, variance), in closed form:
//   -variance * (pdf(hi) - pdf(lo)) + mean * (cdf(hi) - cdf(lo)).
inline double partial_first_moment(const Interval& iv, const GaussianParams& p) {
    detail::check_params(p);
    if (std::isnan(iv.lo) || std::isnan(iv.hi))
        throw DomainError("partial_first_moment: NaN endpoint");
    if (iv.lo > iv.hi) throw DomainError("partial_first_moment: lo > hi");
    const double pdf_lo = std::isinf(iv.lo) ? 0.0 : normal_pdf(iv.lo, p);
    const double pdf_hi = std::isinf(iv.hi) ? 0.0 : normal_pdf(iv.hi, p);
    const double cdf_lo = normal_cdf(iv.lo, p);
    const double cdf_hi = normal_cdf(iv.hi, p);
    return -p.variance * (pdf_hi - pdf_lo) + p.mean * (cdf_hi - cdf_lo);
}

} // namespace corrbandit
