#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "corrbandit/errors.hpp"
#include "corrbandit/gaussian.hpp"
#include "corrbandit/mvn.hpp"

namespace corrbandit {

// How an observation propagates into the covariance matrix.
//  DiagonalOnly: only diagonal entries shrink; off-diagonals stay at their
//    prior values. Faithful to the printed update equations, but the state
//    can lose internal consistency over long update sequences (see
//    correlated_update).
//  JointGaussian: full rank-one conditioning of the joint Gaussian; the
//    posterior stays a valid covariance matrix for any update sequence.
enum class UpdateMode { DiagonalOnly, JointGaussian };

struct Observation {
    int arm = 0;
    double payoff = 0.0;
};

using History = std::vector<Observation>;

class BeliefState {
  public:
    BeliefState(Vec theta, Mat cov, double noise_var,
                UpdateMode mode = UpdateMode::DiagonalOnly)
        : theta_(std::move(theta)), cov_(std::move(cov)), noise_var_(noise_var), mode_(mode) {
        validate();
        cov_ = 0.5 * (cov_ + cov_.transpose().eval());
    }

    int size() const { return int(theta_.size()); }
    const Vec& theta() const { return theta_; }
    const Mat& cov() const { return cov_; }
    double noise_var() const { return noise_var_; }
    UpdateMode mode() const { return mode_; }

    void check_arm(int arm) const {
        if (arm < 0 || arm >= size()) throw DomainError("belief: arm index out of range");
    }

  private:
    struct Unchecked {};
    BeliefState(Unchecked, Vec theta, Mat cov, double noise_var, UpdateMode mode)
        : theta_(std::move(theta)), cov_(std::move(cov)), noise_var_(noise_var), mode_(mode) {}

    void validate() const {
        if (theta_.size() < 1) throw DomainError("belief: needs at least one arm");
        if (cov_.rows() != theta_.size() || cov_.cols() != theta_.size())
            throw DomainError("belief: covariance dimension mismatch");
        if (!theta_.allFinite() || !cov_.allFinite())
            throw DomainError("belief: non-finite entries");
        if (!(noise_var_ > 0.0) || !std::isfinite(noise_var_))
            throw DomainError("belief: noise_var must be positive and finite");
        const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
        const double tol = 1e-12 * scale;
        for (Eigen::Index i = 0; i < cov_.rows(); ++i) {
            if (cov_(i, i) < 0.0) throw DomainError("belief: negative variance entry");
            for (Eigen::Index j = i + 1; j < cov_.cols(); ++j) {
                if (std::fabs(cov_(i, j) - cov_(j, i)) > tol)
                    throw DomainError("belief: covariance not symmetric");
                // Cauchy-Schwarz, with slack for roundoff.
                if (cov_(i, j) * cov_(i, j) > cov_(i, i) * cov_(j, j) + tol * scale)
                    throw DomainError("belief: covariance violates Cauchy-Schwarz");
            }
        }
    }

    friend BeliefState self_update(const BeliefState&, int, double);
    friend BeliefState correlated_update(const BeliefState&, int, double);

    Vec theta_;
    Mat cov_;
    double noise_var_;
    UpdateMode mode_;
};

// Marginal distribution of the next observed payoff of `arm`.
inline GaussianParams predictive(const BeliefState& b, int arm) {
    b.check_arm(arm);
    return {b.theta()[arm], b.cov()(arm, arm) + b.noise_var()};
}

// Posterior for the observed arm only; every other entry is untouched.
//   theta' = (sigma^2 x + sigma0^2 theta) / (sigma^2 + sigma0^2)
//   var'   = sigma^2 sigma0^2 / (sigma^2 + sigma0^2)
inline BeliefState self_update(const BeliefState& b, int arm, double x) {
    b.check_arm(arm);
    if (!std::isfinite(x)) throw DomainError("self_update: observation not finite");
    const double v = b.cov_(arm, arm);
    const double s0 = b.noise_var_;
    Vec theta = b.theta_;
    Mat cov = b.cov_;
    theta[arm] = (v * x + s0 * theta[arm]) / (v + s0);
    cov(arm, arm) = v * s0 / (v + s0);
    return BeliefState(BeliefState::Unchecked{}, std::move(theta), std::move(cov), s0, b.mode_);
}

// Propagates one observation of `selected` into every arm:
//   theta_j' = theta_j + cov_sj (x - theta_s) / (cov_ss + sigma0^2)
//   var_j'   = var_j - cov_sj^2 / (cov_ss + sigma0^2)
// In JointGaussian mode the whole matrix gets the rank-one downdate
//   cov' = cov - g g^T / (cov_ss + sigma0^2),  g = cov e_s.
// A diagonal entry dropping to zero or below means the state (necessarily an
// invalid intermediate of DiagonalOnly iteration) cannot absorb the update.
inline BeliefState correlated_update(const BeliefState& b, int selected, double x) {
    b.check_arm(selected);
    if (!std::isfinite(x)) throw DomainError("correlated_update: observation not finite");
    const double den = b.cov_(selected, selected) + b.noise_var_;
    const Vec g = b.cov_.col(selected);
    Vec theta = b.theta_ + g * ((x - b.theta_[selected]) / den);
    Mat cov = b.cov_;
    if (b.mode_ == UpdateMode::JointGaussian) {
        cov -= (g * g.transpose()) / den;
        cov = 0.5 * (cov + cov.transpose().eval());
    } else {
        cov.diagonal() -= g.cwiseProduct(g) / den;
    }
    for (Eigen::Index j = 0; j < cov.rows(); ++j) {
        const double old_var = b.cov_(j, j);
        if (cov(j, j) < 0.0 || (cov(j, j) == 0.0 && old_var > 0.0))
            throw DegeneracyError("correlated_update: variance of arm " + std::to_string(j) +
                                  " collapsed to " + std::to_string(cov(j, j)));
        if (old_var == 0.0) cov(j, j) = 0.0;
    }
    return BeliefState(BeliefState::Unchecked{}, std::move(theta), std::move(cov),
                       b.noise_var_, b.mode_);
}

// Folds a history of observations over the prior, oldest first.
inline BeliefState replay(const BeliefState& prior, const History& h) {
    BeliefState b = prior;
    for (const Observation& o : h) b = correlated_update(b, o.arm, o.payoff);
    return b;
}

} // namespace corrbandit
