#pragma once

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "corrbandit/errors.hpp"
#include "corrbandit/rng.hpp"

namespace corrbandit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace detail {

// Square root factor of a PSD matrix via eigendecomposition. Tiny negative
// eigenvalues from roundoff are clamped to zero; anything materially negative
// is a caller error. Handles rank-deficient inputs (e.g. the zero matrix),
// which a plain Cholesky would reject.
inline Mat psd_sqrt(const Mat& cov) {
    if (cov.rows() != cov.cols()) throw DomainError("psd_sqrt: matrix not square");
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    if (es.info() != Eigen::Success) throw DomainError("psd_sqrt: factorization failed");
    Vec ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < -1e-9 * scale)
            throw DomainError("psd_sqrt: matrix is not positive semidefinite");
        ev[i] = std::max(0.0, ev[i]);
    }
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

} // namespace detail

// Draws `count` rows from N(mean, cov). Deterministic for a given seed.
inline Mat sample_mvn(const Vec& mean, const Mat& cov, int count, std::uint64_t seed) {
    if (cov.rows() != mean.size() || cov.cols() != mean.size())
        throw DomainError("sample_mvn: dimension mismatch");
    if (count < 0) throw DomainError("sample_mvn: negative count");
    const Mat factor = detail::psd_sqrt(cov);
    std::mt19937_64 rng = make_engine({seed, 0x6d766e73616d706cull});
    std::normal_distribution<double> unit(0.0, 1.0);
    Mat out(count, mean.size());
    Vec z(mean.size());
    for (int r = 0; r < count; ++r) {
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = unit(rng);
        out.row(r) = (mean + factor * z).transpose();
    }
    return out;
}

struct FittedPrior {
    Vec theta;
    Mat cov;
};

// Sample mean and covariance of rows, shrunk toward the diagonal and
// jitter-floored so the result always factorizes:
//   cov = (1 - lambda) * S + lambda * diag(S) + eps * I,
// lambda = 0.1, eps = 1e-8 * trace(S)/dim (1e-8 if the trace vanishes).
inline FittedPrior fit_prior(const Mat& samples) {
    const Eigen::Index n = samples.rows();
    const Eigen::Index d = samples.cols();
    if (n < 2) throw DomainError("fit_prior: need at least 2 rows");
    if (d < 1) throw DomainError("fit_prior: need at least 1 column");
    if (!samples.allFinite()) throw DomainError("fit_prior: non-finite sample");
    FittedPrior out;
    out.theta = samples.colwise().mean();
    const Mat centered = samples.rowwise() - out.theta.transpose();
    Mat s = (centered.transpose() * centered) / double(n - 1);
    s = 0.5 * (s + s.transpose().eval());
    constexpr double lambda = 0.1;
    Mat shrunk = (1.0 - lambda) * s;
    shrunk.diagonal() = s.diagonal();
    double eps = 1e-8 * s.trace() / double(d);
    if (!(eps > 0.0)) eps = 1e-8;
    shrunk.diagonal().array() += eps;
    out.cov = shrunk;
    return out;
}

} // namespace corrbandit
