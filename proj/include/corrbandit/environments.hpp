#pragma once

#include <cmath>
#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "corrbandit/errors.hpp"
#include "corrbandit/mvn.hpp"
#include "corrbandit/rng.hpp"

namespace corrbandit {

struct StepOutcome {
    double payoff = 0.0;
    Vec row; // full payoff vector, one entry per arm
};

// Hidden payoff vector mu drawn once per episode from N(theta, cov); each
// step observes mu + independent N(0, noise_var) noise per arm. mu does not
// move within an episode.
class SyntheticEnv {
  public:
    SyntheticEnv(Vec theta, Mat cov, double noise_var)
        : theta_(std::move(theta)), noise_sd_(std::sqrt(noise_var)),
          factor_(detail::psd_sqrt(cov)) {
        if (cov.rows() != theta_.size() || cov.cols() != theta_.size())
            throw DomainError("SyntheticEnv: dimension mismatch");
        if (!(noise_var > 0.0) || !std::isfinite(noise_var))
            throw DomainError("SyntheticEnv: noise_var must be positive and finite");
    }

    int arms() const { return int(theta_.size()); }

    void reset(std::uint64_t seed) {
        rng_ = make_engine({seed, 0x73796e7468656e76ull});
        std::normal_distribution<double> unit(0.0, 1.0);
        Vec z(theta_.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = unit(rng_);
        mu_ = theta_ + factor_ * z;
        ready_ = true;
    }

    StepOutcome step(int arm) {
        if (!ready_) throw DomainError("SyntheticEnv: step before reset");
        if (arm < 0 || arm >= arms()) throw DomainError("SyntheticEnv: arm out of range");
        std::normal_distribution<double> unit(0.0, 1.0);
        Vec row = mu_;
        for (Eigen::Index i = 0; i < row.size(); ++i) row[i] += noise_sd_ * unit(rng_);
        return {row[arm], std::move(row)};
    }

    const Vec& mu() const {
        if (!ready_) throw DomainError("SyntheticEnv: mu before reset");
        return mu_;
    }

  private:
    Vec theta_;
    double noise_sd_;
    Mat factor_;
    Vec mu_;
    std::mt19937_64 rng_;
    bool ready_ = false;
};

// Day-level payoff matrix where every row is an independent episode:
// row t = mu_t + noise_t with mu_t ~ N(theta, cov). The covariance of rows
// across days is therefore cov + noise_var * I, so cross-arm structure is
// visible to a prior fitted on a slice of the series.
inline Mat synthesize_series(const Vec& theta, const Mat& cov, double noise_var, int length,
                             std::uint64_t seed) {
    if (length < 1) throw DomainError("synthesize_series: length must be >= 1");
    if (!(noise_var > 0.0)) throw DomainError("synthesize_series: noise_var must be positive");
    const Mat factor = detail::psd_sqrt(cov);
    std::mt19937_64 rng = make_engine({seed, 0x7365726965737379ull});
    std::normal_distribution<double> unit(0.0, 1.0);
    const double noise_sd = std::sqrt(noise_var);
    Mat out(length, theta.size());
    Vec z(theta.size());
    for (int t = 0; t < length; ++t) {
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = unit(rng);
        Vec row = theta + factor * z;
        for (Eigen::Index i = 0; i < row.size(); ++i) row[i] += noise_sd * unit(rng);
        out.row(t) = row.transpose();
    }
    return out;
}

struct ReplaySeries {
    std::vector<std::string> arm_names;
    std::vector<std::string> dates; // post-trim, aligned with rows
    Mat rows;
    int trimmed_rows = 0; // leading rows dropped because some arm had no value
};

namespace detail {

inline bool looks_like_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
        if (s[i] < '0' || s[i] > '9') return false;
    return true;
}

inline std::vector<std::string> split_csv_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return cells;
}

} // namespace detail

// Parses the replay CSV format: header "date,<name>..." then one row per day.
// Empty payoff cells mark missing values; the series is trimmed to the
// maximal suffix of fully populated rows (late-starting series lose their
// leading days, nothing is imputed).
inline ReplaySeries replay_parse(std::istream& in, const std::string& origin) {
    std::string line;
    if (!std::getline(in, line)) throw DataError(origin + ": empty input");
    ReplaySeries out;
    {
        auto cells = detail::split_csv_line(line);
        if (cells.empty() || cells[0] != "date")
            throw DataError(origin + ": header must start with 'date'");
        if (cells.size() < 2) throw DataError(origin + ": header lists no arms");
        out.arm_names.assign(cells.begin() + 1, cells.end());
        for (std::size_t i = 0; i < out.arm_names.size(); ++i)
            if (out.arm_names[i].empty())
                throw DataError(origin + ": empty arm name in header column " +
                                std::to_string(i + 2));
    }
    const std::size_t n_arms = out.arm_names.size();
    std::vector<std::string> dates;
    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != n_arms + 1)
            throw DataError(origin + ": row " + std::to_string(lineno) + ": expected " +
                            std::to_string(n_arms + 1) + " cells, got " +
                            std::to_string(cells.size()));
        if (!detail::looks_like_date(cells[0]))
            throw DataError(origin + ": row " + std::to_string(lineno) +
                            ": first cell is not a YYYY-MM-DD date: '" + cells[0] + "'");
        std::vector<double> row(n_arms);
        for (std::size_t c = 0; c < n_arms; ++c) {
            const std::string& cell = cells[c + 1];
            if (cell.empty()) {
                row[c] = std::numeric_limits<double>::quiet_NaN(); // missing
                continue;
            }
            double v = 0.0;
            const char* first = cell.data();
            const char* last = cell.data() + cell.size();
            auto [ptr, ec] = std::from_chars(first, last, v);
            if (ec != std::errc() || ptr != last)
                throw DataError(origin + ": row " + std::to_string(lineno) + ", column " +
                                std::to_string(c + 2) + ": not a number: '" + cell + "'");
            row[c] = v;
        }
        dates.push_back(cells[0]);
        rows.push_back(std::move(row));
    }
    // Maximal full-data suffix: everything after the last row with a gap.
    std::size_t start = 0;
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (double v : rows[r])
            if (std::isnan(v)) start = r + 1;
    if (rows.size() - start < 2)
        throw DataError(origin + ": fewer than 2 complete data rows after trimming");
    out.trimmed_rows = int(start);
    out.dates.assign(dates.begin() + long(start), dates.end());
    out.rows.resize(long(rows.size() - start), long(n_arms));
    for (std::size_t r = start; r < rows.size(); ++r)
        for (std::size_t c = 0; c < n_arms; ++c)
            out.rows(long(r - start), long(c)) = rows[r][c];
    return out;
}

inline ReplaySeries replay_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(path + ": cannot open file");
    return replay_parse(f, path);
}

// Steps through a fixed payoff matrix. Exhaustion is a signal, not an error,
// and leaves the cursor untouched.
class ReplayEnv {
  public:
    explicit ReplayEnv(Mat rows) : rows_(std::move(rows)) {
        if (rows_.rows() < 1 || rows_.cols() < 1)
            throw DomainError("ReplayEnv: empty payoff matrix");
    }

    int arms() const { return int(rows_.cols()); }
    int cursor() const { return cursor_; }
    int remaining() const { return int(rows_.rows()) - cursor_; }

    std::optional<StepOutcome> step(int arm) {
        if (arm < 0 || arm >= arms()) throw DomainError("ReplayEnv: arm out of range");
        if (cursor_ >= rows_.rows()) return std::nullopt;
        StepOutcome o{rows_(cursor_, arm), rows_.row(cursor_).transpose()};
        ++cursor_;
        return o;
    }

  private:
    Mat rows_;
    Eigen::Index cursor_ = 0;
};

} // namespace corrbandit
