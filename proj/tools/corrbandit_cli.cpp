#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "corrbandit/corrbandit.hpp"

namespace {

using namespace corrbandit;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string arm_label(int arm, bool one_based) {
    return one_based ? "ad " + std::to_string(arm + 1) : "arm_index " + std::to_string(arm);
}

void print_regions(std::ostream& os, const std::vector<DominanceRegion>& regions,
                   bool one_based, const std::string& indent) {
    for (const DominanceRegion& r : regions) {
        const bool lo_open = std::isinf(r.interval.lo);
        const bool hi_open = std::isinf(r.interval.hi);
        os << indent << arm_label(r.arm, one_based);
        if (lo_open && hi_open)
            os << " for all x";
        else if (lo_open)
            os << " if x < " << fmt(r.interval.hi);
        else if (hi_open)
            os << " if x > " << fmt(r.interval.lo);
        else
            os << " if " << fmt(r.interval.lo) << " < x < " << fmt(r.interval.hi);
        os << '\n';
    }
}

int cmd_toy() {
    Vec theta(2);
    theta << 1.0, 0.95;
    Mat cov(2, 2);
    cov << 10.0, 0.2, 0.2, 50.0;
    const BeliefState belief(theta, cov, 0.1);
    std::ostream& os = std::cout;
    os << "two ads: theta = [1, 0.95], cov = [[10, 0.2], [0.2, 50]], noise_var = 0.1\n\n";
    const ValueT1 v1 = value_t1(belief);
    os << "horizon 1: value " << fmt(v1.value) << " with ad " << (v1.arm + 1) << "\n\n";
    for (int first = 0; first < belief.size(); ++first) {
        os << "branch ad " << (first + 1) << ": value " << fmt(value_t2_branch(belief, first))
           << '\n';
        print_regions(os, dominance_regions(belief, first), true, "  then ");
    }
    const TwoStepPolicy plan = value_t2(belief);
    os << "\nhorizon 2: value " << fmt(plan.value) << ", optimal first ad "
       << (plan.first_arm + 1) << '\n';
    return 0;
}

int cmd_plan(const std::string& belief_path, int horizon, const std::string& density_name) {
    std::ifstream f(belief_path);
    if (!f) throw DataError(belief_path + ": cannot open belief file");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw DataError(belief_path + ": " + e.what());
    }
    const BeliefState belief = belief_from_json(j);
    const LookaheadDensity density = density_name == "predictive"
                                         ? LookaheadDensity::PredictiveVariance
                                         : LookaheadDensity::BeliefVariance;
    std::ostream& os = std::cout;
    os << "arms: " << belief.size() << '\n' << "horizon: " << horizon << '\n';
    if (horizon == 1) {
        const ValueT1 v = value_t1(belief);
        os << "value: " << fmt(v.value) << '\n' << "arm_index: " << v.arm << '\n';
        return 0;
    }
    for (int first = 0; first < belief.size(); ++first)
        os << "branch arm_index " << first << ": value "
           << fmt(value_t2_branch(belief, first, density)) << '\n';
    const TwoStepPolicy plan = value_t2(belief, density);
    os << "value: " << fmt(plan.value) << '\n' << "arm_index: " << plan.first_arm << '\n';
    os << "second step:\n";
    print_regions(os, plan.second_step, false, "  ");
    return 0;
}

int cmd_validate(const std::string& path) {
    const ReplaySeries s = replay_load(path);
    std::cout << "ok: " << path << '\n';
    std::cout << "arms: " << s.arm_names.size() << " (";
    for (std::size_t i = 0; i < s.arm_names.size(); ++i)
        std::cout << (i ? ", " : "") << s.arm_names[i];
    std::cout << ")\n";
    std::cout << "rows: " << s.rows.rows() << " complete (" << s.trimmed_rows
              << " trimmed from an incomplete prefix)\n";
    std::cout << "dates: " << s.dates.front() << " .. " << s.dates.back() << '\n';
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& output_dir, int threads) {
    ExperimentConfig cfg = load_config(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (threads > 0) cfg.threads = threads;
    const ExperimentOutput out = run_experiment(cfg);
    emit(out, cfg, cfg.output_dir);
    std::ostream& os = std::cout;
    os << "runs: " << out.runs.size() << " (" << out.chunks.size() << " chunks)\n";
    for (const PolicySummary& p : out.ranking)
        os << "policy " << p.policy << ": mean normalized " << fmt(p.mean_normalized) << '\n';
    if (out.comparison.defined) {
        os << "best " << out.comparison.best << " vs " << out.comparison.second
           << ": wilcoxon p = " << fmt(out.comparison.p_value)
           << (out.comparison.significant ? " (significant)" : " (not significant)") << '\n';
    } else if (!out.comparison.best.empty()) {
        os << "best " << out.comparison.best << " vs " << out.comparison.second
           << ": wilcoxon undefined (fewer than 5 informative chunk pairs), not significant\n";
    }
    os << "wrote " << cfg.output_dir << "/results.csv, traces.csv, summary.json, plotdata/\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Correlated Gaussian bandit benchmark harness"};
    app.require_subcommand(1);

    std::string config_path, output_dir, belief_path, csv_path;
    int threads = 0;
    int horizon = 2;
    std::string density = "belief";

    CLI::App* run = app.add_subcommand("run", "Run a configured experiment and emit result files");
    run->add_option("--config", config_path, "JSON experiment config")->required();
    run->add_option("--output-dir", output_dir, "Override the config's output directory");
    run->add_option("--threads", threads, "Override the config's worker count");

    app.add_subcommand("toy", "Solve the built-in two-ad example at horizons 1 and 2");

    CLI::App* plan = app.add_subcommand("plan", "Exact planner on a serialized belief");
    plan->add_option("--belief", belief_path, "Belief JSON (theta, cov, noise_var[, mode])")
        ->required();
    plan->add_option("--horizon", horizon, "Lookahead depth")->check(CLI::IsMember({1, 2}));
    plan->add_option("--density", density, "Density the pending observation integrates against")
        ->check(CLI::IsMember({"belief", "predictive"}));

    CLI::App* validate = app.add_subcommand("validate", "Lint a replay CSV");
    validate->add_option("csv", csv_path, "Replay CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand("run")) return cmd_run(config_path, output_dir, threads);
        if (app.got_subcommand("toy")) return cmd_toy();
        if (app.got_subcommand("plan")) return cmd_plan(belief_path, horizon, density);
        if (app.got_subcommand("validate")) return cmd_validate(csv_path);
    } catch (const corrbandit::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const corrbandit::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
