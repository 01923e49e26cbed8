#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "corrbandit/belief.hpp"
#include "corrbandit/errors.hpp"
#include "corrbandit/exact_planner.hpp"
#include "corrbandit/rng.hpp"

namespace corrbandit {

// ---------------------------------------------------------------------------
// Shared per-arm play statistics
// ---------------------------------------------------------------------------

struct UcbArmStats {
    std::vector<long long> count;
    std::vector<double> sum;
    std::vector<double> sum_sq;

    explicit UcbArmStats(int arms)
        : count(std::size_t(arms), 0), sum(std::size_t(arms), 0.0),
          sum_sq(std::size_t(arms), 0.0) {
        if (arms < 1) throw DomainError("UcbArmStats: need at least one arm");
    }

    int arms() const { return int(count.size()); }

    void check_arm(int arm) const {
        if (arm < 0 || arm >= arms()) throw DomainError("UcbArmStats: arm out of range");
    }

    void record(int arm, double x) {
        check_arm(arm);
        if (!std::isfinite(x)) throw DomainError("UcbArmStats: non-finite reward");
        ++count[std::size_t(arm)];
        sum[std::size_t(arm)] += x;
        sum_sq[std::size_t(arm)] += x * x;
    }

    double mean(int arm) const {
        check_arm(arm);
        return count[std::size_t(arm)] > 0 ? sum[std::size_t(arm)] / double(count[std::size_t(arm)])
                                           : 0.0;
    }
};

// Min-max scaling of rewards into [0, 1] with bounds taken from the training
// window; test-time excursions are clamped. A flat window maps to 0.5.
struct RewardScaler {
    double lo = 0.0;
    double hi = 1.0;
    double operator()(double x) const {
        if (!(hi > lo)) return 0.5;
        return std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
    }
};

// ---------------------------------------------------------------------------
// Selection rules
// ---------------------------------------------------------------------------

inline int random_select(int n_arms, std::mt19937_64& rng) {
    if (n_arms < 1) throw DomainError("random_select: need at least one arm");
    return int(std::uniform_int_distribution<int>(0, n_arms - 1)(rng));
}

inline int myopic_select(const BeliefState& b) { return value_t1(b).arm; }

struct GoldenTrace {
    std::vector<int> trace;
    double value = 0.0;
};

// Hindsight upper bound: at every step take the row maximum (ties lowest).
inline GoldenTrace golden_trace(const Mat& rows) {
    if (rows.rows() < 1 || rows.cols() < 1)
        throw DomainError("golden_trace: empty payoff matrix");
    GoldenTrace out;
    out.trace.reserve(std::size_t(rows.rows()));
    for (Eigen::Index t = 0; t < rows.rows(); ++t) {
        Eigen::Index best = 0;
        rows.row(t).maxCoeff(&best);
        out.trace.push_back(int(best));
        out.value += rows(t, best);
    }
    return out;
}

// UCB1 index on [0,1]-scaled rewards: mean + sqrt(2 ln t / t_i).
inline double ucb1_index(const UcbArmStats& s, int arm, long long t) {
    s.check_arm(arm);
    const long long ti = s.count[std::size_t(arm)];
    if (ti < 1) throw DomainError("ucb1_index: arm has no plays");
    if (t < 1) throw DomainError("ucb1_index: t must be >= 1");
    return s.mean(arm) + std::sqrt(2.0 * std::log(double(t)) / double(ti));
}

inline int ucb1_select(const UcbArmStats& s, long long t) {
    for (int i = 0; i < s.arms(); ++i)
        if (s.count[std::size_t(i)] == 0) return i;
    int best = 0;
    double best_index = ucb1_index(s, 0, t);
    for (int i = 1; i < s.arms(); ++i) {
        const double v = ucb1_index(s, i, t);
        if (v > best_index) {
            best_index = v;
            best = i;
        }
    }
    return best;
}

// Forced-exploration arm shared by the UCB1-NORMAL family: any arm played
// fewer than ceil(8 ln t) times must be played, least-played first (ties to
// the lowest index). Unplayed arms always qualify. Returns -1 when no arm
// needs forcing.
inline int forced_exploration_arm(const UcbArmStats& s, long long t) {
    if (t < 1) throw DomainError("forced_exploration_arm: t must be >= 1");
    const long long threshold = (long long)std::ceil(8.0 * std::log(double(t)));
    int pick = -1;
    for (int i = 0; i < s.arms(); ++i) {
        const long long ti = s.count[std::size_t(i)];
        if (ti < threshold || ti == 0) {
            if (pick == -1 || ti < s.count[std::size_t(pick)]) pick = i;
        }
    }
    return pick;
}

namespace detail {

// mean_i + sqrt(16 * (q_i - t_i mean_i^2) / (t_i - 1) * (t - 1) / t_i)
// with the radicand floored at zero against roundoff.
inline double ucb_normal_index_impl(double mean_i, double q_i, long long ti, long long t) {
    if (ti < 2) throw DegeneracyError("ucb1-normal index reached with t_i < 2");
    const double spread = std::max(0.0, q_i - double(ti) * mean_i * mean_i);
    const double rad = 16.0 * spread / double(ti - 1) * double(t - 1) / double(ti);
    return mean_i + std::sqrt(rad);
}

} // namespace detail

inline double ucb1_normal_index(const UcbArmStats& s, int arm, long long t) {
    s.check_arm(arm);
    return detail::ucb_normal_index_impl(s.mean(arm), s.sum_sq[std::size_t(arm)],
                                         s.count[std::size_t(arm)], t);
}

inline int ucb1_normal_select(const UcbArmStats& s, long long t) {
    const int forced = forced_exploration_arm(s, t);
    if (forced >= 0) return forced;
    int best = 0;
    double best_index = ucb1_normal_index(s, 0, t);
    for (int i = 1; i < s.arms(); ++i) {
        const double v = ucb1_normal_index(s, i, t);
        if (v > best_index) {
            best_index = v;
            best = i;
        }
    }
    return best;
}

// Correlated UCB1-NORMAL: identical skeleton, but the exploitation term is
// the belief mean replayed from the prior over the full history, so every
// arm's estimate absorbs all observations, not only its own.
inline double ucb1_normal_cor_index(const Vec& replayed_theta, const UcbArmStats& s, int arm,
                                    long long t) {
    s.check_arm(arm);
    if (arm >= replayed_theta.size()) throw DomainError("ucb1_normal_cor_index: theta too short");
    const double th = replayed_theta[arm];
    return detail::ucb_normal_index_impl(th, s.sum_sq[std::size_t(arm)],
                                         s.count[std::size_t(arm)], t);
}

inline int ucb1_normal_cor_select(const Vec& replayed_theta, const UcbArmStats& s, long long t) {
    const int forced = forced_exploration_arm(s, t);
    if (forced >= 0) return forced;
    int best = 0;
    double best_index = ucb1_normal_cor_index(replayed_theta, s, 0, t);
    for (int i = 1; i < s.arms(); ++i) {
        const double v = ucb1_normal_cor_index(replayed_theta, s, i, t);
        if (v > best_index) {
            best_index = v;
            best = i;
        }
    }
    return best;
}

inline int ucb1_normal_cor_select(const BeliefState& prior, const History& h, long long t) {
    UcbArmStats s(prior.size());
    for (const Observation& o : h) s.record(o.arm, o.payoff);
    return ucb1_normal_cor_select(replay(prior, h).theta(), s, t);
}

// ---------------------------------------------------------------------------
// VI-COR: receding-horizon Monte-Carlo value iteration over the belief
// ---------------------------------------------------------------------------

struct ViCorConfig {
    int samples = 64;   // M0 observations per arm per node
    int horizon = 2;    // receding lookahead depth
    bool grid_weighted = false; // density-weighted uniform grid instead of MC draws
    double grid_span_sigmas = 6.0;
};

namespace detail {

inline double vi_cor_value(const BeliefState& b, int depth, const ViCorConfig& cfg,
                           std::uint64_t node_seed);

// Value of playing `arm` now with `depth` steps to go, using shared draws z
// across candidate arms at the same node.
inline double vi_cor_arm_value(const BeliefState& b, int arm, int depth, const ViCorConfig& cfg,
                               const std::vector<double>& z, std::uint64_t node_seed) {
    double v = b.theta()[arm];
    if (depth <= 1) return v;
    const GaussianParams px = predictive(b, arm);
    const double sd = std::sqrt(px.variance);
    double acc = 0.0;
    if (cfg.grid_weighted) {
        // Deterministic variant: integrate over an equispaced grid weighted
        // by the predictive density.
        const double span = cfg.grid_span_sigmas * sd;
        const double step = 2.0 * span / double(cfg.samples);
        for (int m = 0; m < cfg.samples; ++m) {
            const double x = px.mean - span + (double(m) + 0.5) * step;
            const BeliefState next = correlated_update(b, arm, x);
            acc += normal_pdf(x, px) * step *
                   vi_cor_value(next, depth - 1, cfg, mix_seed({node_seed, std::uint64_t(arm),
                                                                std::uint64_t(m)}));
        }
    } else {
        for (int m = 0; m < cfg.samples; ++m) {
            const double x = px.mean + sd * z[std::size_t(m)];
            const BeliefState next = correlated_update(b, arm, x);
            acc += vi_cor_value(next, depth - 1, cfg, mix_seed({node_seed, std::uint64_t(arm),
                                                                std::uint64_t(m)}));
        }
        acc /= double(cfg.samples);
    }
    return v + acc;
}

inline double vi_cor_value(const BeliefState& b, int depth, const ViCorConfig& cfg,
                           std::uint64_t node_seed) {
    if (depth <= 1) return value_t1(b).value;
    std::vector<double> z(std::size_t(cfg.samples), 0.0);
    if (!cfg.grid_weighted) {
        std::mt19937_64 rng(node_seed);
        std::normal_distribution<double> unit(0.0, 1.0);
        for (double& zi : z) zi = unit(rng);
    }
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < b.size(); ++i)
        best = std::max(best, vi_cor_arm_value(b, i, depth, cfg, z, node_seed));
    return best;
}

} // namespace detail

// Per-arm lookahead values at the root. Depth is capped at min(T - t + 1, H);
// with one step left this degenerates to the posterior means (myopic).
inline std::vector<double> vi_cor_values(const BeliefState& b, int t, int T,
                                         const ViCorConfig& cfg, std::mt19937_64& rng) {
    if (cfg.samples < 1) throw DomainError("vi_cor: samples must be >= 1");
    if (cfg.horizon < 1) throw DomainError("vi_cor: horizon must be >= 1");
    if (t < 1 || t > T) throw DomainError("vi_cor: t out of range");
    const int depth = std::min(T - t + 1, cfg.horizon);
    const std::uint64_t node_seed = rng();
    std::vector<double> values(std::size_t(b.size()), 0.0);
    std::vector<double> z(std::size_t(cfg.samples), 0.0);
    if (depth > 1 && !cfg.grid_weighted) {
        std::mt19937_64 node_rng(node_seed);
        std::normal_distribution<double> unit(0.0, 1.0);
        for (double& zi : z) zi = unit(node_rng);
    }
    for (int i = 0; i < b.size(); ++i)
        values[std::size_t(i)] = detail::vi_cor_arm_value(b, i, depth, cfg, z, node_seed);
    return values;
}

inline int vi_cor_select(const BeliefState& b, int t, int T, const ViCorConfig& cfg,
                         std::mt19937_64& rng) {
    const auto values = vi_cor_values(b, t, T, cfg, rng);
    return int(std::max_element(values.begin(), values.end()) - values.begin());
}

// ---------------------------------------------------------------------------
// Uniform runtime interface used by the experiment harness
// ---------------------------------------------------------------------------

class Policy {
  public:
    virtual ~Policy() = default;
    // t is the 1-based step inside a window of T steps. `belief` is the
    // prior folded over this run's own history by the harness.
    virtual int select(const History& h, const BeliefState& belief, int t, int T,
                       std::mt19937_64& rng) = 0;
    virtual void observe(int /*arm*/, double /*payoff*/) {}
    virtual bool uses_belief() const { return false; }
    virtual bool uses_noise() const { return false; }
    virtual bool stochastic() const { return false; }
};

class RandomPolicy final : public Policy {
  public:
    int select(const History&, const BeliefState&, int, int, std::mt19937_64& rng) override {
        return random_select(arms_, rng);
    }
    bool stochastic() const override { return true; }
    explicit RandomPolicy(int arms) : arms_(arms) {}

  private:
    int arms_;
};

class MyopicPolicy final : public Policy {
  public:
    int select(const History&, const BeliefState& b, int, int, std::mt19937_64&) override {
        return myopic_select(b);
    }
    bool uses_belief() const override { return true; }
    bool uses_noise() const override { return true; }
};

class Ucb1Policy final : public Policy {
  public:
    Ucb1Policy(int arms, RewardScaler scaler) : stats_(arms), scaler_(scaler) {}
    int select(const History&, const BeliefState&, int t, int, std::mt19937_64&) override {
        return ucb1_select(stats_, t);
    }
    void observe(int arm, double payoff) override { stats_.record(arm, scaler_(payoff)); }

  private:
    UcbArmStats stats_;
    RewardScaler scaler_;
};

class Ucb1NormalPolicy final : public Policy {
  public:
    explicit Ucb1NormalPolicy(int arms) : stats_(arms) {}
    int select(const History&, const BeliefState&, int t, int, std::mt19937_64&) override {
        return ucb1_normal_select(stats_, t);
    }
    void observe(int arm, double payoff) override { stats_.record(arm, payoff); }

  private:
    UcbArmStats stats_;
};

class Ucb1NormalCorPolicy final : public Policy {
  public:
    explicit Ucb1NormalCorPolicy(int arms) : stats_(arms) {}
    int select(const History&, const BeliefState& b, int t, int, std::mt19937_64&) override {
        // The harness-maintained belief equals replay(prior, history).
        return ucb1_normal_cor_select(b.theta(), stats_, t);
    }
    void observe(int arm, double payoff) override { stats_.record(arm, payoff); }
    bool uses_belief() const override { return true; }
    bool uses_noise() const override { return true; }

  private:
    UcbArmStats stats_;
};

class ViCorPolicy final : public Policy {
  public:
    explicit ViCorPolicy(ViCorConfig cfg) : cfg_(cfg) {}
    int select(const History&, const BeliefState& b, int t, int T, std::mt19937_64& rng) override {
        return vi_cor_select(b, t, T, cfg_, rng);
    }
    bool uses_belief() const override { return true; }
    bool uses_noise() const override { return true; }
    bool stochastic() const override { return !cfg_.grid_weighted; }

  private:
    ViCorConfig cfg_;
};

struct PolicyContext {
    int arms = 0;
    RewardScaler scaler;
    ViCorConfig vi_cor;
};

// Names accepted in experiment configs. "golden" is handled by the harness
// directly (it needs the future rows) and has no Policy object.
inline std::unique_ptr<Policy> make_policy(const std::string& name, const PolicyContext& ctx) {
    if (name == "random") return std::make_unique<RandomPolicy>(ctx.arms);
    if (name == "myopic") return std::make_unique<MyopicPolicy>();
    if (name == "ucb1") return std::make_unique<Ucb1Policy>(ctx.arms, ctx.scaler);
    if (name == "ucb1-normal") return std::make_unique<Ucb1NormalPolicy>(ctx.arms);
    if (name == "ucb1-normal-cor") return std::make_unique<Ucb1NormalCorPolicy>(ctx.arms);
    if (name == "vi-cor") return std::make_unique<ViCorPolicy>(ctx.vi_cor);
    throw ConfigError("unknown policy: " + name);
}

} // namespace corrbandit
