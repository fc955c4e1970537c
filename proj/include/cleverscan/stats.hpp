#pragma once

// Performance metrics with bootstrap confidence intervals, the exact
// two-sided McNemar test, and Holm step-down multiplicity control in a plain
// and a discrete (Tarone-adjusted) variant. The discrete variant exploits
// the finite attainable p-value supports of exact tests: hypotheses whose
// smallest attainable p cannot fall below the current threshold do not count
// toward the correction denominator, which can only increase power.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cleverscan/rng.hpp"
#include "cleverscan/train.hpp"

namespace cleverscan::stats {

struct Performance {
    double accuracy = 0.0;
    double sensitivity = 0.0;  // AD (label 1) is the positive class
    double specificity = 0.0;
    double auc = 0.0;
};

/// Metrics over one run's test predictions. AUC is the Mann-Whitney rank
/// statistic: P(random positive outranks random negative), ties counting 1/2.
inline Performance performance(const std::vector<net::Prediction>& predictions) {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    std::vector<double> pos_scores, neg_scores;
    for (const auto& p : predictions) {
        if (p.true_label == 1) {
            pos_scores.push_back(p.score1);
            p.predicted == 1 ? ++tp : ++fn;
        } else {
            neg_scores.push_back(p.score1);
            p.predicted == 0 ? ++tn : ++fp;
        }
    }
    if (pos_scores.empty() || neg_scores.empty())
        throw std::invalid_argument("performance: test set must contain both classes");

    Performance perf;
    perf.accuracy = static_cast<double>(tp + tn) / static_cast<double>(predictions.size());
    perf.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
    perf.specificity = static_cast<double>(tn) / static_cast<double>(tn + fp);

    double wins = 0.0;
    for (double ps : pos_scores)
        for (double ns : neg_scores) {
            if (ps > ns) wins += 1.0;
            else if (ps == ns) wins += 0.5;
        }
    perf.auc = wins / (static_cast<double>(pos_scores.size()) *
                       static_cast<double>(neg_scores.size()));
    return perf;
}

// ---------------------------------------------------------------------------
// Exact McNemar test on discordant pair counts (b, c).
// ---------------------------------------------------------------------------

namespace detail {

// P(X <= m) for X ~ Binomial(n, 1/2). The term recurrence stays on exact
// integers below 2^53, so small n (including everything the oracle checks)
// is computed without rounding.
inline double binomial_half_cdf(int n, int m) {
    if (m < 0) return 0.0;
    if (m >= n) return 1.0;
    if (n <= 1000) {
        double sum = 0.0, term = 1.0;  // term = C(n, k)
        for (int k = 0; k <= m; ++k) {
            if (k > 0) {
                term *= static_cast<double>(n - k + 1);
                term /= static_cast<double>(k);
            }
            sum += std::ldexp(term, -n);
        }
        return sum;
    }
    // log-space fallback for very large n
    double sum = 0.0;
    for (int k = 0; k <= m; ++k) {
        const double log_term = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                                std::lgamma(n - k + 1.0) - n * std::log(2.0);
        sum += std::exp(log_term);
    }
    return std::min(1.0, sum);
}

} // namespace detail

/// Two-sided exact binomial p-value: min(1, 2 P(X <= min(b,c))) with
/// X ~ Binomial(b+c, 1/2); p = 1 when there are no discordant pairs.
inline double mcnemar_exact(int b, int c) {
    if (b < 0 || c < 0)
        throw std::invalid_argument("mcnemar_exact: counts must be non-negative");
    const int n = b + c;
    if (n == 0) return 1.0;
    return std::min(1.0, 2.0 * detail::binomial_half_cdf(n, std::min(b, c)));
}

/// The finite set of p-values attainable by the exact test at b+c = n,
/// ascending. Empty-discordance tests attain only p = 1.
inline std::vector<double> mcnemar_attainable(int n) {
    if (n < 0) throw std::invalid_argument("mcnemar_attainable: n must be >= 0");
    std::vector<double> support;
    if (n == 0) {
        support.push_back(1.0);
        return support;
    }
    for (int k = 0; k <= n / 2; ++k)
        support.push_back(std::min(1.0, 2.0 * detail::binomial_half_cdf(n, k)));
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());
    return support;
}

// ---------------------------------------------------------------------------
// Holm step-down procedures.
// ---------------------------------------------------------------------------

struct HolmDecision {
    double p_raw = 1.0;
    double p_adjusted = 1.0;
    bool reject = false;
};

inline std::vector<HolmDecision> holm_plain(const std::vector<double>& p_values,
                                            double alpha = 0.05) {
    const std::size_t m = p_values.size();
    std::vector<HolmDecision> decisions(m);
    if (m == 0) return decisions;
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
    double running = 0.0;
    bool alive = true;
    for (std::size_t rank = 0; rank < m; ++rank) {
        const std::size_t i = order[rank];
        const double adjusted =
            std::min(1.0, static_cast<double>(m - rank) * p_values[i]);
        running = std::max(running, adjusted);
        decisions[i].p_raw = p_values[i];
        decisions[i].p_adjusted = running;
        alive = alive && running <= alpha;
        decisions[i].reject = alive;
    }
    return decisions;
}

/// Discrete (Tarone-adjusted) Holm: at each step the denominator K* is the
/// smallest K such that at most K of the remaining tests can attain a
/// p-value <= alpha/K. K* never exceeds the remaining count, so every plain
/// Holm rejection is kept.
inline std::vector<HolmDecision> holm_discrete(
    const std::vector<double>& p_values,
    const std::vector<std::vector<double>>& attainable_supports, double alpha = 0.05) {
    const std::size_t m = p_values.size();
    if (attainable_supports.size() != m)
        throw std::invalid_argument("holm_discrete: one support set per test required");
    std::vector<HolmDecision> decisions(m);
    if (m == 0) return decisions;

    std::vector<double> min_attainable(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (attainable_supports[i].empty())
            throw std::invalid_argument("holm_discrete: empty attainable support");
        min_attainable[i] =
            *std::min_element(attainable_supports[i].begin(), attainable_supports[i].end());
    }

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });

    double running = 0.0;
    bool alive = true;
    for (std::size_t rank = 0; rank < m; ++rank) {
        // Tarone's K* over the tests still in play (ranks >= rank).
        const std::size_t remaining = m - rank;
        std::size_t k_star = remaining;
        for (std::size_t k = 1; k <= remaining; ++k) {
            std::size_t attainable_count = 0;
            for (std::size_t r = rank; r < m; ++r)
                if (min_attainable[order[r]] <= alpha / static_cast<double>(k))
                    ++attainable_count;
            if (attainable_count <= k) {
                k_star = std::max<std::size_t>(1, k);
                break;
            }
        }
        const std::size_t i = order[rank];
        const double adjusted =
            std::min(1.0, static_cast<double>(k_star) * p_values[i]);
        running = std::max(running, adjusted);
        decisions[i].p_raw = p_values[i];
        decisions[i].p_adjusted = running;
        alive = alive && running <= alpha;
        decisions[i].reject = alive;
    }
    return decisions;
}

// ---------------------------------------------------------------------------
// Across-session summaries.
// ---------------------------------------------------------------------------

struct MetricSummary {
    double mean = 0.0;
    double sd = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    int n = 0;
    bool has_spread = false;  // false when fewer than 2 sessions
};

/// Mean, sample sd and a seeded percentile-bootstrap 95% CI of the mean.
inline MetricSummary summarize(const std::vector<double>& values, int bootstrap = 10000,
                               std::uint64_t seed = 0) {
    MetricSummary summary;
    summary.n = static_cast<int>(values.size());
    if (values.empty()) return summary;
    summary.mean = std::accumulate(values.begin(), values.end(), 0.0) /
                   static_cast<double>(values.size());
    if (values.size() < 2) {
        summary.ci_lo = summary.ci_hi = summary.mean;
        return summary;
    }

    double ss = 0.0;
    for (double v : values) ss += (v - summary.mean) * (v - summary.mean);
    summary.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    summary.has_spread = true;

    Rng rng(mix_seed(seed, 0x626f6f74ULL));
    std::vector<double> means(static_cast<std::size_t>(bootstrap));
    for (auto& m : means) {
        double acc = 0.0;
        for (std::size_t k = 0; k < values.size(); ++k)
            acc += values[rng.below(values.size())];
        m = acc / static_cast<double>(values.size());
    }
    std::sort(means.begin(), means.end());
    const std::size_t lo_idx =
        static_cast<std::size_t>(std::floor(0.025 * (bootstrap - 1)));
    const std::size_t hi_idx =
        static_cast<std::size_t>(std::ceil(0.975 * (bootstrap - 1)));
    summary.ci_lo = means[lo_idx];
    summary.ci_hi = means[hi_idx];
    return summary;
}

} // namespace cleverscan::stats
