#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "corrbandit/belief.hpp"
#include "corrbandit/environments.hpp"
#include "corrbandit/errors.hpp"
#include "corrbandit/mvn.hpp"
#include "corrbandit/policies.hpp"
#include "corrbandit/rng.hpp"
#include "corrbandit/wilcoxon.hpp"

namespace corrbandit {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Chunking protocol
// ---------------------------------------------------------------------------

struct ChunkSpec {
    int start = 0;
    int width = 0;
    int train_len = 0;
    int test_len() const { return width - train_len; }
    int test_start() const { return start + train_len; }
};

// Overlapping windows: width ceil(2L/(C+1)), starts spaced by
// floor((L-w)/(C-1)) with the last window pinned to end at L. The first
// ceil(f*w) rows of each window are the training slice.
inline std::vector<ChunkSpec> make_chunks(int length, int count, double train_fraction) {
    if (count < 1) throw ConfigError("make_chunks: chunk count must be >= 1");
    if (length < 2 * count) throw ConfigError("make_chunks: series length must be >= 2 * chunks");
    if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
        throw ConfigError("make_chunks: train_fraction must be in (0, 1)");
    const int w = int(std::ceil(2.0 * double(length) / double(count + 1)));
    const int train = int(std::ceil(train_fraction * double(w)));
    if (train < 2) throw ConfigError("make_chunks: training slice shorter than 2 rows");
    if (train >= w) throw ConfigError("make_chunks: empty test slice");
    std::vector<ChunkSpec> chunks;
    if (count == 1) {
        chunks.push_back({0, w, train});
        return chunks;
    }
    const int stride = (length - w) / (count - 1);
    for (int i = 0; i < count; ++i) {
        const int start = (i == count - 1) ? length - w : i * stride;
        chunks.push_back({start, w, train});
    }
    return chunks;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct EnvSpec {
    enum class Type { Synthetic, Replay };
    Type type = Type::Synthetic;
    // synthetic series
    Vec theta;
    Mat cov;
    double noise_var = 1.0;
    int length = 0;
    // replay
    std::string path;
};

struct ExperimentConfig {
    EnvSpec env;
    std::vector<std::string> policies;
    int chunks = 8;
    double train_fraction = 0.2;
    std::vector<double> noise_grid = {0.01, 0.1, 1.0, 10.0, 40.0, 60.0, 100.0};
    std::vector<std::uint64_t> seeds; // filled with defaults by validate()
    int impressions_per_step = 1;
    UpdateMode update_mode = UpdateMode::DiagonalOnly;
    enum class GoldenMode { PerStep, BestFixed };
    GoldenMode golden_mode = GoldenMode::PerStep;
    ViCorConfig vi_cor;
    int threads = 0; // 0 = hardware concurrency; CORRBANDIT_THREADS caps it
    std::uint64_t master_seed = 1;
    bool emit_final_beliefs = false;
    std::string output_dir = "out";
};

struct RunResult {
    std::string policy;
    int chunk = 0;
    std::uint64_t seed = 0;
    double noise_var = 0.0;
    double cumulative = 0.0;
    double golden = 0.0;
    double normalized = 0.0;
    std::vector<int> selections;
    std::vector<double> payoffs;
    std::string final_belief; // JSON text, only when requested
};

struct PolicySummary {
    std::string policy;
    double mean_normalized = 0.0;
    std::vector<double> chunk_scores;
};

struct ComparisonResult {
    bool defined = false;
    std::string best;
    std::string second;
    double p_value = 1.0;
    bool significant = false;
};

struct ExperimentOutput {
    std::vector<ChunkSpec> chunks;
    std::vector<std::string> arm_names;
    std::vector<RunResult> runs;
    std::vector<PolicySummary> ranking; // excludes golden, best first
    ComparisonResult comparison;
};

namespace detail {

inline bool known_policy(const std::string& name) {
    static const char* names[] = {"golden",      "random",          "myopic",
                                  "ucb1",        "ucb1-normal",     "ucb1-normal-cor",
                                  "vi-cor"};
    for (const char* n : names)
        if (name == n) return true;
    return false;
}

inline bool policy_uses_noise(const std::string& name) {
    return name == "myopic" || name == "ucb1-normal-cor" || name == "vi-cor";
}

inline bool policy_stochastic(const std::string& name, const ViCorConfig& vi) {
    return name == "random" || (name == "vi-cor" && !vi.grid_weighted);
}

inline double grid_median(std::vector<double> grid) {
    std::sort(grid.begin(), grid.end());
    return grid[(grid.size() - 1) / 2];
}

struct WindowRun {
    std::vector<int> selections;
    std::vector<double> payoffs;
    double cumulative = 0.0;
    std::optional<BeliefState> final_belief;
};

// Plays one policy across a payoff matrix: the policy sees only the payoff
// of the arm it picked; the belief is the prior folded over that history.
inline WindowRun run_policy_window(const std::string& name, const Mat& rows,
                                   const FittedPrior& prior, double noise_var,
                                   const ExperimentConfig& cfg, const RewardScaler& scaler,
                                   std::uint64_t rng_seed, bool want_belief) {
    const int arms = int(rows.cols());
    const int T = int(rows.rows());
    PolicyContext ctx{arms, scaler, cfg.vi_cor};
    auto policy = make_policy(name, ctx);
    BeliefState belief(prior.theta, prior.cov, noise_var, cfg.update_mode);
    std::mt19937_64 rng(rng_seed);
    History history;
    history.reserve(std::size_t(T));
    WindowRun out;
    out.selections.reserve(std::size_t(T));
    out.payoffs.reserve(std::size_t(T));
    for (int t = 1; t <= T; ++t) {
        const int arm = policy->select(history, belief, t, T, rng);
        if (arm < 0 || arm >= arms) throw DegeneracyError(name + ": selected arm out of range");
        const double x = rows(t - 1, arm);
        history.push_back({arm, x});
        policy->observe(arm, x);
        if (policy->uses_belief()) belief = correlated_update(belief, arm, x);
        out.selections.push_back(arm);
        out.payoffs.push_back(x);
        out.cumulative += x;
    }
    if (want_belief) out.final_belief = belief;
    return out;
}

inline double golden_value(const Mat& test, ExperimentConfig::GoldenMode mode,
                           std::vector<int>* trace = nullptr) {
    if (mode == ExperimentConfig::GoldenMode::PerStep) {
        GoldenTrace g = golden_trace(test);
        if (trace) *trace = g.trace;
        return g.value;
    }
    Eigen::Index best = 0;
    test.colwise().sum().maxCoeff(&best);
    if (trace) trace->assign(std::size_t(test.rows()), int(best));
    return test.col(best).sum();
}

} // namespace detail

// Picks the noise factor from the grid that maximizes the policy's payoff on
// the last 20% of the training slice (prior fitted on the rest). Ties break
// toward the smaller value; a run that degenerates scores -infinity; fewer
// than 5 training rows fall back to the grid median.
inline double tune_noise(const Mat& train, const std::vector<double>& grid,
                         const std::string& policy, const ExperimentConfig& cfg,
                         std::uint64_t seed) {
    if (grid.empty()) throw ConfigError("tune_noise: empty grid");
    for (double g : grid)
        if (!(g > 0.0) || !std::isfinite(g))
            throw ConfigError("tune_noise: grid values must be positive and finite");
    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.size() == 1) return sorted[0];
    if (train.rows() < 5) return detail::grid_median(sorted);
    const int val_len = std::max(1, int(std::ceil(0.2 * double(train.rows()))));
    const Mat sub = train.topRows(train.rows() - val_len);
    const Mat val = train.bottomRows(val_len);
    const FittedPrior prior = fit_prior(sub);
    RewardScaler scaler{sub.minCoeff(), sub.maxCoeff()};
    double best_noise = sorted[0];
    double best_score = -std::numeric_limits<double>::infinity();
    for (double g : sorted) {
        double score;
        try {
            score = detail::run_policy_window(policy, val, prior, g, cfg, scaler,
                                              mix_seed({cfg.master_seed, seed, 0x74756e65ull}),
                                              false)
                        .cumulative;
        } catch (const DegeneracyError&) {
            score = -std::numeric_limits<double>::infinity();
        }
        if (score > best_score) {
            best_score = score;
            best_noise = g;
        }
    }
    return best_noise;
}

namespace detail {

inline RunResult run_one(const ExperimentConfig& cfg, const Mat& series, const ChunkSpec& chunk,
                         int chunk_idx, const std::string& policy, std::uint64_t seed) {
    const Mat train = series.middleRows(chunk.start, chunk.train_len);
    const Mat test = series.middleRows(chunk.test_start(), chunk.test_len());
    RunResult r;
    r.policy = policy;
    r.chunk = chunk_idx;
    r.seed = seed;
    const double m = double(cfg.impressions_per_step);
    if (policy == "golden") {
        std::vector<int> trace;
        r.golden = golden_value(test, cfg.golden_mode, &trace) * m;
        r.cumulative = r.golden;
        r.normalized = 100.0;
        r.noise_var = 0.0;
        r.selections = std::move(trace);
        r.payoffs.reserve(std::size_t(test.rows()));
        for (Eigen::Index t = 0; t < test.rows(); ++t)
            r.payoffs.push_back(test(t, r.selections[std::size_t(t)]) * m);
        return r;
    }
    const FittedPrior prior = fit_prior(train);
    r.noise_var = policy_uses_noise(policy)
                      ? tune_noise(train, cfg.noise_grid, policy, cfg, seed)
                      : grid_median(cfg.noise_grid);
    RewardScaler scaler{train.minCoeff(), train.maxCoeff()};
    const std::uint64_t rng_seed =
        mix_seed({cfg.master_seed, std::hash<std::string>{}(policy), std::uint64_t(chunk_idx),
                  seed, 0x72756e6f6e65ull});
    WindowRun w = run_policy_window(policy, test, prior, r.noise_var, cfg, scaler, rng_seed,
                                    cfg.emit_final_beliefs);
    r.selections = std::move(w.selections);
    r.payoffs = std::move(w.payoffs);
    for (double& p : r.payoffs) p *= m;
    r.cumulative = w.cumulative * m;
    r.golden = golden_value(test, cfg.golden_mode) * m;
    r.normalized = r.golden != 0.0 ? 100.0 * r.cumulative / r.golden
                                   : std::numeric_limits<double>::quiet_NaN();
    if (w.final_belief) {
        json b;
        b["theta"] = std::vector<double>(w.final_belief->theta().begin(),
                                         w.final_belief->theta().end());
        std::vector<std::vector<double>> cov;
        for (int i = 0; i < w.final_belief->size(); ++i)
            cov.emplace_back(w.final_belief->cov().row(i).begin(),
                             w.final_belief->cov().row(i).end());
        b["cov"] = cov;
        b["noise_var"] = w.final_belief->noise_var();
        b["mode"] = w.final_belief->mode() == UpdateMode::DiagonalOnly ? "diagonal-only"
                                                                        : "joint-gaussian";
        r.final_belief = b.dump();
    }
    return r;
}

inline int effective_threads(int configured, int n_jobs) {
    int t = configured > 0 ? configured : int(std::thread::hardware_concurrency());
    if (t < 1) t = 1;
    if (const char* env = std::getenv("CORRBANDIT_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw ConfigError("CORRBANDIT_THREADS must be a positive integer");
        t = std::min(t, int(v));
    }
    return std::max(1, std::min(t, n_jobs));
}

template <typename Fn> inline void parallel_for(int n_jobs, int threads, Fn&& fn) {
    if (threads <= 1) {
        for (int i = 0; i < n_jobs; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(threads));
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            while (!failed.load(std::memory_order_relaxed)) {
                const int i = next.fetch_add(1);
                if (i >= n_jobs) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                    failed.store(true);
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

} // namespace detail

// Ranks the non-golden policies by mean normalized chunk score and tests the
// best against the runner-up with the paired Wilcoxon over chunk scores. An
// all-tied pairing is reported as not significant rather than an error.
inline ExperimentOutput& compare_policies(ExperimentOutput& out) {
    std::map<std::string, std::map<int, std::pair<double, int>>> acc; // policy -> chunk -> (sum, n)
    for (const RunResult& r : out.runs) {
        if (r.policy == "golden") continue;
        auto& cell = acc[r.policy][r.chunk];
        cell.first += r.normalized;
        cell.second += 1;
    }
    out.ranking.clear();
    std::optional<std::vector<int>> chunk_set;
    for (const auto& [name, per_chunk] : acc) {
        PolicySummary s;
        s.policy = name;
        std::vector<int> chunks;
        for (const auto& [chunk, cell] : per_chunk) {
            chunks.push_back(chunk);
            s.chunk_scores.push_back(cell.first / double(cell.second));
        }
        if (!chunk_set)
            chunk_set = chunks;
        else if (*chunk_set != chunks)
            throw DataError("compare_policies: policies cover different chunk sets");
        for (double v : s.chunk_scores) s.mean_normalized += v;
        s.mean_normalized /= double(s.chunk_scores.size());
        out.ranking.push_back(std::move(s));
    }
    std::sort(out.ranking.begin(), out.ranking.end(), [](const auto& a, const auto& b) {
        if (a.mean_normalized != b.mean_normalized) return a.mean_normalized > b.mean_normalized;
        return a.policy < b.policy;
    });
    out.comparison = {};
    if (out.ranking.size() >= 2) {
        out.comparison.best = out.ranking[0].policy;
        out.comparison.second = out.ranking[1].policy;
        std::vector<std::pair<double, double>> pairs;
        for (std::size_t c = 0; c < out.ranking[0].chunk_scores.size(); ++c)
            pairs.emplace_back(out.ranking[0].chunk_scores[c], out.ranking[1].chunk_scores[c]);
        try {
            const WilcoxonResult w = wilcoxon_signed_rank(pairs);
            out.comparison.defined = true;
            out.comparison.p_value = w.p_value;
            out.comparison.significant = w.p_value < 0.05;
        } catch (const UndefinedTestError&) {
            out.comparison.defined = false;
            out.comparison.p_value = std::numeric_limits<double>::quiet_NaN();
            out.comparison.significant = false;
        }
    }
    return out;
}

inline void validate(const ExperimentConfig& cfg) {
    if (cfg.policies.empty()) throw ConfigError("config: no policies listed");
    for (const auto& p : cfg.policies)
        if (!detail::known_policy(p)) throw ConfigError("config: unknown policy: " + p);
    for (std::size_t i = 0; i < cfg.policies.size(); ++i)
        for (std::size_t j = i + 1; j < cfg.policies.size(); ++j)
            if (cfg.policies[i] == cfg.policies[j])
                throw ConfigError("config: duplicate policy: " + cfg.policies[i]);
    if (cfg.noise_grid.empty()) throw ConfigError("config: noise_grid is empty");
    for (double g : cfg.noise_grid)
        if (!(g > 0.0) || !std::isfinite(g))
            throw ConfigError("config: noise_grid values must be positive and finite");
    if (cfg.impressions_per_step < 1)
        throw ConfigError("config: impressions_per_step must be >= 1");
    if (cfg.vi_cor.samples < 1) throw ConfigError("config: vi_cor.samples must be >= 1");
    if (cfg.vi_cor.horizon < 1) throw ConfigError("config: vi_cor.horizon must be >= 1");
    if (cfg.env.type == EnvSpec::Type::Synthetic) {
        if (cfg.env.length < 2) throw ConfigError("config: synthetic length must be >= 2");
        if (cfg.env.theta.size() < 1) throw ConfigError("config: synthetic theta is empty");
        if (cfg.env.cov.rows() != cfg.env.theta.size() ||
            cfg.env.cov.cols() != cfg.env.theta.size())
            throw ConfigError("config: synthetic cov dimension mismatch");
        if (!(cfg.env.noise_var > 0.0))
            throw ConfigError("config: synthetic noise_var must be positive");
    } else if (cfg.env.path.empty()) {
        throw ConfigError("config: replay path is empty");
    }
}

inline ExperimentOutput run_experiment(const ExperimentConfig& cfg_in) {
    ExperimentConfig cfg = cfg_in;
    validate(cfg);
    if (cfg.seeds.empty()) {
        const int n = cfg.env.type == EnvSpec::Type::Synthetic ? 32 : 1;
        for (int i = 1; i <= n; ++i) cfg.seeds.push_back(std::uint64_t(i));
    }

    ExperimentOutput out;
    std::optional<ReplaySeries> replay_data;
    int length = 0;
    if (cfg.env.type == EnvSpec::Type::Replay) {
        replay_data = replay_load(cfg.env.path);
        length = int(replay_data->rows.rows());
        out.arm_names = replay_data->arm_names;
    } else {
        length = cfg.env.length;
        for (Eigen::Index i = 0; i < cfg.env.theta.size(); ++i)
            out.arm_names.push_back("arm" + std::to_string(i));
    }
    out.chunks = make_chunks(length, cfg.chunks, cfg.train_fraction);

    // Per-seed series; identical draws feed every policy so runs are paired.
    std::map<std::uint64_t, Mat> series;
    if (cfg.env.type == EnvSpec::Type::Replay) {
        for (std::uint64_t s : cfg.seeds) series.emplace(s, replay_data->rows);
    } else {
        for (std::uint64_t s : cfg.seeds)
            series.emplace(s, synthesize_series(cfg.env.theta, cfg.env.cov, cfg.env.noise_var,
                                                cfg.env.length,
                                                mix_seed({cfg.master_seed, s, 0x646174617365ull})));
    }

    struct Job {
        std::string policy;
        int chunk_idx;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const std::string& p : cfg.policies) {
        const bool one_seed = cfg.env.type == EnvSpec::Type::Replay &&
                              (p == "golden" || !detail::policy_stochastic(p, cfg.vi_cor));
        for (int c = 0; c < int(out.chunks.size()); ++c) {
            if (one_seed) {
                jobs.push_back({p, c, cfg.seeds.front()});
            } else {
                for (std::uint64_t s : cfg.seeds) jobs.push_back({p, c, s});
            }
        }
    }

    out.runs.resize(jobs.size());
    const int threads = detail::effective_threads(cfg.threads, int(jobs.size()));
    detail::parallel_for(int(jobs.size()), threads, [&](int i) {
        const Job& j = jobs[std::size_t(i)];
        out.runs[std::size_t(i)] = detail::run_one(cfg, series.at(j.seed),
                                                   out.chunks[std::size_t(j.chunk_idx)],
                                                   j.chunk_idx, j.policy, j.seed);
    });
    std::sort(out.runs.begin(), out.runs.end(), [](const RunResult& a, const RunResult& b) {
        if (a.policy != b.policy) return a.policy < b.policy;
        if (a.chunk != b.chunk) return a.chunk < b.chunk;
        return a.seed < b.seed;
    });
    compare_policies(out);
    return out;
}

// ---------------------------------------------------------------------------
// Config and belief JSON
// ---------------------------------------------------------------------------

inline BeliefState belief_from_json(const json& j) {
    if (!j.is_object()) throw DataError("belief: expected a JSON object");
    for (const auto& [key, _] : j.items())
        if (key != "theta" && key != "cov" && key != "noise_var" && key != "mode")
            throw DataError("belief: unknown key: " + key);
    if (!j.contains("theta") || !j.contains("cov") || !j.contains("noise_var"))
        throw DataError("belief: needs theta, cov and noise_var");
    const auto theta_v = j.at("theta").get<std::vector<double>>();
    const auto cov_v = j.at("cov").get<std::vector<std::vector<double>>>();
    Vec theta = Eigen::Map<const Vec>(theta_v.data(), long(theta_v.size()));
    Mat cov(theta_v.size(), theta_v.size());
    if (cov_v.size() != theta_v.size()) throw DataError("belief: cov row count mismatch");
    for (std::size_t i = 0; i < cov_v.size(); ++i) {
        if (cov_v[i].size() != theta_v.size()) throw DataError("belief: cov is ragged");
        for (std::size_t k = 0; k < cov_v[i].size(); ++k) cov(long(i), long(k)) = cov_v[i][k];
    }
    UpdateMode mode = UpdateMode::DiagonalOnly;
    if (j.contains("mode")) {
        const std::string m = j.at("mode").get<std::string>();
        if (m == "joint-gaussian")
            mode = UpdateMode::JointGaussian;
        else if (m != "diagonal-only")
            throw DataError("belief: mode must be diagonal-only or joint-gaussian");
    }
    try {
        return BeliefState(std::move(theta), std::move(cov), j.at("noise_var").get<double>(),
                           mode);
    } catch (const DomainError& e) {
        throw DataError(std::string("belief: ") + e.what());
    }
}

inline json config_to_json(const ExperimentConfig& cfg) {
    json j;
    if (cfg.env.type == EnvSpec::Type::Synthetic) {
        json env;
        env["type"] = "synthetic";
        env["theta"] = std::vector<double>(cfg.env.theta.begin(), cfg.env.theta.end());
        std::vector<std::vector<double>> cov;
        for (Eigen::Index i = 0; i < cfg.env.cov.rows(); ++i)
            cov.emplace_back(cfg.env.cov.row(i).begin(), cfg.env.cov.row(i).end());
        env["cov"] = cov;
        env["noise_var"] = cfg.env.noise_var;
        env["length"] = cfg.env.length;
        j["env"] = env;
    } else {
        j["env"] = {{"type", "replay"}, {"path", cfg.env.path}};
    }
    j["policies"] = cfg.policies;
    j["chunks"] = cfg.chunks;
    j["train_fraction"] = cfg.train_fraction;
    j["noise_grid"] = cfg.noise_grid;
    j["seeds"] = cfg.seeds;
    j["impressions_per_step"] = cfg.impressions_per_step;
    j["update_mode"] =
        cfg.update_mode == UpdateMode::DiagonalOnly ? "diagonal-only" : "joint-gaussian";
    j["golden_mode"] =
        cfg.golden_mode == ExperimentConfig::GoldenMode::PerStep ? "per-step" : "best-fixed";
    j["vi_cor"] = {{"samples", cfg.vi_cor.samples},
                   {"horizon", cfg.vi_cor.horizon},
                   {"grid_weighted", cfg.vi_cor.grid_weighted}};
    j["threads"] = cfg.threads;
    j["master_seed"] = cfg.master_seed;
    j["emit_final_beliefs"] = cfg.emit_final_beliefs;
    j["output_dir"] = cfg.output_dir;
    return j;
}

inline ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    static const std::vector<std::string> keys = {
        "env",          "policies",    "chunks",      "train_fraction",
        "noise_grid",   "seeds",       "impressions_per_step", "update_mode",
        "golden_mode",  "vi_cor",      "threads",     "master_seed",
        "emit_final_beliefs", "output_dir"};
    for (const auto& [key, _] : j.items())
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            throw ConfigError("config: unknown key: " + key);
    ExperimentConfig cfg;
    try {
        if (!j.contains("env") || !j.at("env").is_object())
            throw ConfigError("config: missing env object");
        const json& env = j.at("env");
        const std::string type = env.value("type", "");
        if (type == "synthetic") {
            cfg.env.type = EnvSpec::Type::Synthetic;
            const auto theta = env.at("theta").get<std::vector<double>>();
            cfg.env.theta = Eigen::Map<const Vec>(theta.data(), long(theta.size()));
            const auto cov = env.at("cov").get<std::vector<std::vector<double>>>();
            cfg.env.cov.resize(long(theta.size()), long(theta.size()));
            if (cov.size() != theta.size()) throw ConfigError("config: cov row count mismatch");
            for (std::size_t r = 0; r < cov.size(); ++r) {
                if (cov[r].size() != theta.size()) throw ConfigError("config: cov is ragged");
                for (std::size_t c = 0; c < cov[r].size(); ++c)
                    cfg.env.cov(long(r), long(c)) = cov[r][c];
            }
            cfg.env.noise_var = env.at("noise_var").get<double>();
            cfg.env.length = env.at("length").get<int>();
        } else if (type == "replay") {
            cfg.env.type = EnvSpec::Type::Replay;
            cfg.env.path = env.at("path").get<std::string>();
        } else {
            throw ConfigError("config: env.type must be 'synthetic' or 'replay'");
        }
        cfg.policies = j.at("policies").get<std::vector<std::string>>();
        cfg.chunks = j.value("chunks", cfg.chunks);
        cfg.train_fraction = j.value("train_fraction", cfg.train_fraction);
        if (j.contains("noise_grid")) cfg.noise_grid = j.at("noise_grid").get<std::vector<double>>();
        if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        cfg.impressions_per_step = j.value("impressions_per_step", cfg.impressions_per_step);
        if (j.contains("update_mode")) {
            const std::string m = j.at("update_mode").get<std::string>();
            if (m == "diagonal-only")
                cfg.update_mode = UpdateMode::DiagonalOnly;
            else if (m == "joint-gaussian")
                cfg.update_mode = UpdateMode::JointGaussian;
            else
                throw ConfigError("config: bad update_mode: " + m);
        }
        if (j.contains("golden_mode")) {
            const std::string m = j.at("golden_mode").get<std::string>();
            if (m == "per-step")
                cfg.golden_mode = ExperimentConfig::GoldenMode::PerStep;
            else if (m == "best-fixed")
                cfg.golden_mode = ExperimentConfig::GoldenMode::BestFixed;
            else
                throw ConfigError("config: bad golden_mode: " + m);
        }
        if (j.contains("vi_cor")) {
            const json& v = j.at("vi_cor");
            cfg.vi_cor.samples = v.value("samples", cfg.vi_cor.samples);
            cfg.vi_cor.horizon = v.value("horizon", cfg.vi_cor.horizon);
            cfg.vi_cor.grid_weighted = v.value("grid_weighted", cfg.vi_cor.grid_weighted);
        }
        cfg.threads = j.value("threads", cfg.threads);
        cfg.master_seed = j.value("master_seed", cfg.master_seed);
        cfg.emit_final_beliefs = j.value("emit_final_beliefs", cfg.emit_final_beliefs);
        cfg.output_dir = j.value("output_dir", cfg.output_dir);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    validate(cfg);
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open config file");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Emission: results.csv, traces.csv, summary.json, plotdata/<policy>.csv
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

// Writes every output file under `dir`. Runs are already sorted, so repeated
// invocations with the same config produce byte-identical files.
inline void emit(const ExperimentOutput& out, const ExperimentConfig& cfg,
                 const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "plotdata");

    {
        std::ofstream f(fs::path(dir) / "results.csv", std::ios::binary);
        f << "policy,chunk,seed,noise_var,steps,cumulative,golden,normalized\n";
        for (const RunResult& r : out.runs)
            f << r.policy << ',' << r.chunk << ',' << r.seed << ','
              << detail::fmt_double(r.noise_var) << ',' << r.payoffs.size() << ','
              << detail::fmt_double(r.cumulative) << ',' << detail::fmt_double(r.golden) << ','
              << detail::fmt_double(r.normalized) << '\n';
    }
    {
        std::ofstream f(fs::path(dir) / "traces.csv", std::ios::binary);
        f << "policy,chunk,seed,step,payoff,cumulative,selection\n";
        for (const RunResult& r : out.runs) {
            double cum = 0.0;
            for (std::size_t t = 0; t < r.payoffs.size(); ++t) {
                cum += r.payoffs[t];
                f << r.policy << ',' << r.chunk << ',' << r.seed << ',' << (t + 1) << ','
                  << detail::fmt_double(r.payoffs[t]) << ',' << detail::fmt_double(cum) << ','
                  << r.selections[t] << '\n';
            }
        }
    }
    {
        json summary;
        summary["config"] = config_to_json(cfg);
        summary["arm_names"] = out.arm_names;
        json chunks = json::array();
        for (const ChunkSpec& c : out.chunks)
            chunks.push_back({{"start", c.start},
                              {"width", c.width},
                              {"train_len", c.train_len},
                              {"test_len", c.test_len()}});
        summary["chunks"] = chunks;
        json ranking = json::array();
        for (const PolicySummary& p : out.ranking)
            ranking.push_back({{"policy", p.policy},
                               {"mean_normalized", p.mean_normalized},
                               {"chunk_scores", p.chunk_scores}});
        summary["ranking"] = ranking;
        json cmp;
        cmp["defined"] = out.comparison.defined;
        if (out.comparison.defined) {
            cmp["best"] = out.comparison.best;
            cmp["second"] = out.comparison.second;
            cmp["p_value"] = out.comparison.p_value;
            cmp["significant"] = out.comparison.significant;
        } else if (!out.comparison.best.empty()) {
            cmp["best"] = out.comparison.best;
            cmp["second"] = out.comparison.second;
            cmp["p_value"] = nullptr;
            cmp["significant"] = false;
        }
        summary["comparison"] = cmp;
        if (cfg.emit_final_beliefs) {
            json beliefs = json::array();
            for (const RunResult& r : out.runs)
                if (!r.final_belief.empty())
                    beliefs.push_back({{"policy", r.policy},
                                       {"chunk", r.chunk},
                                       {"seed", r.seed},
                                       {"belief", json::parse(r.final_belief)}});
            summary["final_beliefs"] = beliefs;
        }
        std::ofstream f(fs::path(dir) / "summary.json", std::ios::binary);
        f << summary.dump(2) << '\n';
    }
    {
        // Mean cumulative payoff per step for each policy, the shape used by
        // cumulative-payoff-vs-day plots.
        std::map<std::string, std::vector<std::pair<double, int>>> acc;
        for (const RunResult& r : out.runs) {
            auto& v = acc[r.policy];
            if (v.size() < r.payoffs.size()) v.resize(r.payoffs.size(), {0.0, 0});
            double cum = 0.0;
            for (std::size_t t = 0; t < r.payoffs.size(); ++t) {
                cum += r.payoffs[t];
                v[t].first += cum;
                v[t].second += 1;
            }
        }
        for (const auto& [policy, v] : acc) {
            std::ofstream f(fs::path(dir) / "plotdata" / (policy + ".csv"), std::ios::binary);
            f << "step,mean_cumulative\n";
            for (std::size_t t = 0; t < v.size(); ++t)
                f << (t + 1) << ',' << detail::fmt_double(v[t].first / double(v[t].second))
                  << '\n';
        }
    }
}

} // namespace corrbandit
