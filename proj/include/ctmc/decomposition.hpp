#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctmc/core.hpp"
#include "ctmc/dynamics.hpp"
#include "ctmc/errors.hpp"

namespace ctmc {

/// Reference values for the frozen rates of a counterfactual generator.
struct ReferenceRule {
    enum class Kind { InitialValue, SampleMean, HPTrend };
    Kind kind = Kind::HPTrend;
    double hp_lambda = 1600.0; // used only by HPTrend
};

enum class CounterfactualMode { Equilibrium, OneStep };

inline const char* to_string(CounterfactualMode m) {
    return m == CounterfactualMode::Equilibrium ? "equilibrium" : "one-step";
}

inline const char* to_string(ReferenceRule::Kind k) {
    switch (k) {
        case ReferenceRule::Kind::InitialValue: return "initial-value";
        case ReferenceRule::Kind::SampleMean: return "sample-mean";
        case ReferenceRule::Kind::HPTrend: return "hp-trend";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Hodrick-Prescott filter

struct HPResult {
    std::vector<double> trend;
    std::vector<double> cycle;
};

/// Trend minimizing sum (y - tau)^2 + lambda * sum (second differences of
/// tau)^2, from the normal equations (I + lambda D^T D) tau = y. The system
/// is symmetric positive definite and pentadiagonal, solved by banded
/// Cholesky with bandwidth 2.
inline HPResult hp_filter(const std::vector<double>& series, double lambda) {
    const std::size_t n = series.size();
    if (n < 4) throw data_error("hp_filter: series must have length >= 4");
    if (!(lambda > 0.0)) throw argument_error("hp_filter: lambda must be > 0");

    // Bands of A = I + lambda D^T D: diag[i] = A(i,i), sup1[i] = A(i,i+1),
    // sup2[i] = A(i,i+2). Assembled by accumulating D's rows [1,-2,1].
    std::vector<double> diag(n, 1.0), sup1(n, 0.0), sup2(n, 0.0);
    for (std::size_t t = 0; t + 2 < n; ++t) {
        diag[t] += lambda * 1.0;
        diag[t + 1] += lambda * 4.0;
        diag[t + 2] += lambda * 1.0;
        sup1[t] += lambda * -2.0;
        sup1[t + 1] += lambda * -2.0;
        sup2[t] += lambda * 1.0;
    }

    // Cholesky A = L L^T with L lower-banded: ld[i] = L(i,i),
    // l1[i] = L(i,i-1), l2[i] = L(i,i-2).
    std::vector<double> ld(n), l1(n, 0.0), l2(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (i >= 2) l2[i] = sup2[i - 2] / ld[i - 2];
        if (i >= 1) l1[i] = (sup1[i - 1] - (i >= 2 ? l2[i] * l1[i - 1] : 0.0)) / ld[i - 1];
        const double d = diag[i] - l1[i] * l1[i] - l2[i] * l2[i];
        if (!(d > 0.0)) throw numeric_error("hp_filter: factorization broke down");
        ld[i] = std::sqrt(d);
    }

    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = series[i];
        if (i >= 1) v -= l1[i] * z[i - 1];
        if (i >= 2) v -= l2[i] * z[i - 2];
        z[i] = v / ld[i];
    }
    HPResult out;
    out.trend.resize(n);
    for (std::size_t i = n; i-- > 0;) {
        double v = z[i];
        if (i + 1 < n) v -= l1[i + 1] * out.trend[i + 1];
        if (i + 2 < n) v -= l2[i + 2] * out.trend[i + 2];
        out.trend[i] = v / ld[i];
    }
    out.cycle.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.cycle[i] = series[i] - out.trend[i];
    return out;
}

// ---------------------------------------------------------------------------
// Counterfactual generators and shares

/// Freezes every off-diagonal rate except (vary_from, vary_to) at its
/// reference value; diagonals are recomputed as negative row sums so each
/// output is a valid generator. HP trends of near-zero rates can dip below
/// zero and are clamped.
inline std::vector<GeneratorMatrix> counterfactual_generators(
    const std::vector<GeneratorMatrix>& q_series, const ReferenceRule& rule,
    std::size_t vary_from, std::size_t vary_to) {
    if (q_series.empty()) throw argument_error("counterfactual_generators: empty series");
    if (vary_from == vary_to)
        throw argument_error("counterfactual_generators: the varying entry must be "
                             "off-diagonal");
    const StateSpace& space = q_series.front().space();
    const std::size_t k = space.size();
    if (vary_from >= k || vary_to >= k)
        throw argument_error("counterfactual_generators: rate pair out of range");
    for (const auto& q : q_series)
        require_same_space(space, q.space(), "counterfactual_generators");
    const std::size_t T = q_series.size();

    // reference[i][j] holds the frozen value of rate (i,j) at each t.
    std::vector<std::vector<std::vector<double>>> reference(
        k, std::vector<std::vector<double>>(k));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            if (i == j || (i == vary_from && j == vary_to)) continue;
            std::vector<double> series(T);
            for (std::size_t t = 0; t < T; ++t) series[t] = q_series[t](i, j);
            switch (rule.kind) {
                case ReferenceRule::Kind::InitialValue:
                    reference[i][j].assign(T, series.front());
                    break;
                case ReferenceRule::Kind::SampleMean: {
                    double mean = 0.0;
                    for (double v : series) mean += v;
                    reference[i][j].assign(T, mean / static_cast<double>(T));
                    break;
                }
                case ReferenceRule::Kind::HPTrend: {
                    auto hp = hp_filter(series, rule.hp_lambda);
                    for (double& v : hp.trend) v = std::max(v, 0.0);
                    reference[i][j] = std::move(hp.trend);
                    break;
                }
            }
        }

    std::vector<GeneratorMatrix> out;
    out.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
        Matrix q(k, k);
        for (std::size_t i = 0; i < k; ++i) {
            double off_sum = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                if (i == j) continue;
                q(i, j) = (i == vary_from && j == vary_to) ? q_series[t](i, j)
                                                           : reference[i][j][t];
                off_sum += q(i, j);
            }
            q(i, i) = -off_sum;
        }
        out.emplace_back(space, std::move(q));
    }
    return out;
}

/// Counterfactual share series. Equilibrium mode maps each generator through
/// the equilibrium solver (periods with a singular system come back empty,
/// never fatal). OneStep propagates the observed share at the start of each
/// interval one period forward, so observed_shares[t] must be the share
/// vector at the interval-t origin and must align with qcf_series.
inline std::vector<std::optional<ShareVector>> counterfactual_shares(
    const std::vector<GeneratorMatrix>& qcf_series, CounterfactualMode mode,
    const std::vector<ShareVector>& observed_shares = {}) {
    std::vector<std::optional<ShareVector>> out;
    out.reserve(qcf_series.size());
    if (mode == CounterfactualMode::OneStep) {
        if (observed_shares.size() < qcf_series.size())
            throw argument_error("counterfactual_shares: one-step mode needs an observed "
                                 "share at the start of every interval");
        for (std::size_t t = 0; t < qcf_series.size(); ++t)
            out.emplace_back(propagate(observed_shares[t], qcf_series[t], 1.0));
    } else {
        for (const auto& q : qcf_series) {
            try {
                out.emplace_back(equilibrium(q).shares);
            } catch (const numeric_error&) {
                out.emplace_back(std::nullopt);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Contribution coefficients

/// beta = Cov(pi_cycle, picf_cycle) / Var(pi_cycle), sample normalization
/// (n-1) in both.
inline double contribution(const std::vector<double>& pi_cycle,
                           const std::vector<double>& picf_cycle) {
    if (pi_cycle.size() != picf_cycle.size())
        throw argument_error("contribution: series lengths differ");
    const std::size_t n = pi_cycle.size();
    if (n < 3) throw data_error("contribution: need at least 3 observations");

    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_a += pi_cycle[i];
        mean_b += picf_cycle[i];
    }
    mean_a /= static_cast<double>(n);
    mean_b /= static_cast<double>(n);
    double cov = 0.0, var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (pi_cycle[i] - mean_a) * (picf_cycle[i] - mean_b);
        var += (pi_cycle[i] - mean_a) * (pi_cycle[i] - mean_a);
    }
    // Degenerate target: variance at the rounding floor of the series scale.
    const double floor_sq = 1e-13 * (1.0 + std::abs(mean_a));
    if (var <= floor_sq * floor_sq * static_cast<double>(n))
        throw data_error("contribution: target cyclical component has zero variance");
    return cov / var;
}

// ---------------------------------------------------------------------------
// Full decomposition

struct ContributionEntry {
    std::string from_state;
    std::string to_state;
    double beta;
    std::size_t periods_used;
    std::vector<double> target_shares;         // the detrended series' levels
    std::vector<double> counterfactual_shares; // aligned counterfactual levels
};

struct ContributionTable {
    std::vector<ContributionEntry> entries; // target outflows first, then inflows
    std::string target_state;
    CounterfactualMode mode;
    double beta_sum; // diagnostic; near 1 when the varied rates span the movement
};

/// Decomposes the volatility of the target state's share into per-rate
/// contributions. By default the varied rates are the 2(K-1) flows out of and
/// into the target state; all_pairs widens this to every off-diagonal.
/// Shares (fitted and counterfactual) are detrended with an HP filter before
/// the covariance ratio is formed; set use_observed_target to detrend the
/// observed share instead of the fitted one.
inline ContributionTable decompose_volatility(
    const std::vector<GeneratorMatrix>& q_series,
    const std::vector<ShareVector>& observed_shares, const std::string& target_state,
    const ReferenceRule& rule = {}, CounterfactualMode mode = CounterfactualMode::OneStep,
    double hp_lambda = 1600.0, bool all_pairs = false, bool use_observed_target = false) {
    if (q_series.size() < 8)
        throw data_error("decompose_volatility: need at least 8 periods for detrending");
    const StateSpace& space = q_series.front().space();
    const std::size_t target = space.index(target_state);
    const std::size_t k = space.size();
    const std::size_t T = q_series.size();

    if (mode == CounterfactualMode::OneStep && observed_shares.size() < T)
        throw argument_error("decompose_volatility: one-step mode needs an observed share "
                             "at the start of every interval");

    // Target-share series implied by the actual generators, same construction
    // the counterfactuals use.
    auto fitted = counterfactual_shares(q_series, mode, observed_shares);
    std::vector<double> target_series(T);
    std::vector<bool> fitted_ok(T, true);
    for (std::size_t t = 0; t < T; ++t) {
        if (use_observed_target) {
            if (observed_shares.size() < T + 1)
                throw argument_error("decompose_volatility: observed-target mode needs "
                                     "shares at every interval end");
            target_series[t] = observed_shares[t + 1][target];
        } else if (fitted[t]) {
            target_series[t] = (*fitted[t])[target];
        } else {
            fitted_ok[t] = false;
        }
    }

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (all_pairs) {
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
                if (i != j) pairs.emplace_back(i, j);
    } else {
        for (std::size_t j = 0; j < k; ++j)
            if (j != target) pairs.emplace_back(target, j); // outflows
        for (std::size_t i = 0; i < k; ++i)
            if (i != target) pairs.emplace_back(i, target); // inflows
    }

    ContributionTable table{{}, target_state, mode, 0.0};
    for (auto [s, r] : pairs) {
        auto qcf = counterfactual_generators(q_series, rule, s, r);
        auto cf = counterfactual_shares(qcf, mode, observed_shares);

        std::vector<double> a, b;
        a.reserve(T);
        b.reserve(T);
        for (std::size_t t = 0; t < T; ++t) {
            if (!fitted_ok[t] || !cf[t]) continue;
            a.push_back(target_series[t]);
            b.push_back((*cf[t])[target]);
        }
        if (a.size() < 8)
            throw data_error("decompose_volatility: too few valid periods for rate " +
                             space.label(s) + "->" + space.label(r));
        const double beta = contribution(hp_filter(a, hp_lambda).cycle,
                                         hp_filter(b, hp_lambda).cycle);
        table.entries.push_back({space.label(s), space.label(r), beta, a.size()});
        table.beta_sum += beta;
    }
    return table;
}

} // namespace ctmc
