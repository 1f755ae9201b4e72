#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ctmc/core.hpp"
#include "ctmc/dynamics.hpp"
#include "ctmc/errors.hpp"
#include "ctmc/estimation.hpp"
#include "ctmc/rng.hpp"

namespace ctmc {

/// One observed move: the resampling unit of the bootstrap.
struct TransitionRecord {
    std::uint16_t from;
    std::uint16_t to;
};

inline std::vector<TransitionRecord> to_records(const TransitionCounts& counts) {
    std::vector<TransitionRecord> out;
    out.reserve(static_cast<std::size_t>(counts.total()));
    const std::size_t k = counts.space().size();
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            for (std::int64_t c = 0; c < counts.at(i, j); ++c)
                out.push_back({static_cast<std::uint16_t>(i), static_cast<std::uint16_t>(j)});
    return out;
}

struct BootstrapResult {
    std::size_t B = 0;
    GeneratorMatrix point;               // estimate from the full sample
    Matrix se;                           // se of the raw series output, divisor B
    std::vector<GeneratorMatrix> draws;  // regularized per-draw estimates
    std::vector<Matrix> raw_draws;       // per-draw raw series outputs
    std::uint64_t seed = 0;
    std::size_t redraws = 0;             // draws rejected for an empty row
};

struct PairwiseTest {
    double statistic; // observed difference
    double p_value;
    std::size_t B;
};

namespace detail {

/// Multiset of N draws with replacement, tallied directly per (from, to)
/// cell. Equivalent in distribution to resampling individual records, and
/// independent of the order the records were supplied in.
inline TransitionCounts resample_counts(const TransitionCounts& base, std::int64_t n,
                                        Rng& rng) {
    const std::size_t k = base.space().size();
    std::vector<double> weights;
    weights.reserve(k * k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            weights.push_back(static_cast<double>(base.at(i, j)));

    TransitionCounts out = TransitionCounts::zero(base.space(), base.period());
    // Inverse-CDF draw per record; cumulative weights avoid re-summing.
    std::vector<double> cdf(weights.size());
    double acc = 0.0;
    for (std::size_t c = 0; c < weights.size(); ++c) {
        acc += weights[c];
        cdf[c] = acc;
    }
    for (std::int64_t rec = 0; rec < n; ++rec) {
        const double u = rng.uniform() * acc;
        std::size_t lo = 0, hi = cdf.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (u < cdf[mid])
                hi = mid;
            else
                lo = mid + 1;
        }
        ++out.at(lo / k, lo % k);
    }
    return out;
}

} // namespace detail

/// Bootstrap of the generator estimate: B resamples of the N transition
/// records, each re-estimated P -> Q. Standard errors follow the
/// population-normalized formula (divisor B) applied to the raw series
/// outputs; the stored draws are the regularized (valid) generators so they
/// can be pushed through downstream maps. A draw that empties a row is
/// redrawn from the same stream, with a global cap of 10B attempts.
/// Deterministic given (records, B, seed): each draw has its own derived
/// stream, so parallel schedules cannot change the result.
inline BootstrapResult bootstrap_generator(const TransitionCounts& sample, std::size_t B,
                                           std::uint64_t seed, RegularizationMethod method,
                                           const SeriesConfig& cfg = {}) {
    if (B < 1) throw argument_error("bootstrap_generator: B must be >= 1");
    const std::int64_t n = sample.total();
    const std::size_t k = sample.space().size();
    if (n < static_cast<std::int64_t>(k))
        throw data_error("bootstrap_generator: fewer records than states");

    GeneratorEstimate point = estimate_generator(sample, method, cfg);

    const Rng root(seed);
    std::vector<GeneratorMatrix> draws;
    std::vector<Matrix> raw_draws;
    draws.reserve(B);
    raw_draws.reserve(B);
    std::size_t attempts = 0, redraws = 0;
    const std::size_t max_attempts = 10 * B;
    for (std::size_t b = 0; b < B; ++b) {
        Rng rng = root.split(b);
        while (true) {
            if (attempts++ >= max_attempts)
                throw data_error("bootstrap_generator: exceeded 10B resampling attempts "
                                 "(states too thin to bootstrap)");
            TransitionCounts resampled = detail::resample_counts(sample, n, rng);
            bool empty_row = false;
            for (std::size_t i = 0; i < k; ++i)
                if (resampled.row_total(i) == 0) {
                    empty_row = true;
                    break;
                }
            if (empty_row) {
                ++redraws;
                continue;
            }
            GeneratorEstimate est = estimate_generator(resampled, method, cfg);
            draws.push_back(std::move(est.Q));
            raw_draws.push_back(std::move(est.raw_q_tilde));
            break;
        }
    }

    Matrix mean(k, k);
    for (const auto& q : raw_draws) mean += q;
    mean *= 1.0 / static_cast<double>(B);
    Matrix se(k, k);
    for (const auto& q : raw_draws)
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                const double d = q(i, j) - mean(i, j);
                se(i, j) += d * d;
            }
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            se(i, j) = std::sqrt(se(i, j) / static_cast<double>(B));

    return BootstrapResult{B, std::move(point.Q), std::move(se), std::move(draws),
                           std::move(raw_draws), seed, redraws};
}

inline BootstrapResult bootstrap_generator(const std::vector<TransitionRecord>& records,
                                           const StateSpace& space, std::size_t B,
                                           std::uint64_t seed, RegularizationMethod method,
                                           const SeriesConfig& cfg = {}) {
    TransitionCounts counts = TransitionCounts::zero(space);
    for (const auto& r : records) {
        if (r.from >= space.size() || r.to >= space.size())
            throw argument_error("bootstrap_generator: record state out of range");
        ++counts.at(r.from, r.to);
    }
    return bootstrap_generator(counts, B, seed, method, cfg);
}

struct EquilibriumSe {
    std::vector<double> se;       // per state, divisor = draws used
    std::vector<double> mean;     // per state bootstrap mean
    std::size_t draws_used = 0;
    std::size_t draws_skipped = 0; // singular equilibrium systems
};

/// Pushes every stored bootstrap draw through the equilibrium map and returns
/// per-state standard deviations of the equilibrium shares.
inline EquilibriumSe bootstrap_equilibrium(const BootstrapResult& result) {
    if (result.draws.empty())
        throw argument_error("bootstrap_equilibrium: no stored draws");
    const std::size_t k = result.draws.front().size();
    std::vector<std::vector<double>> shares;
    shares.reserve(result.draws.size());
    std::size_t skipped = 0;
    for (const auto& q : result.draws) {
        try {
            shares.push_back(equilibrium(q).shares.shares());
        } catch (const numeric_error&) {
            ++skipped;
        }
    }
    if (shares.empty())
        throw data_error("bootstrap_equilibrium: every draw had a singular system");

    EquilibriumSe out;
    out.draws_used = shares.size();
    out.draws_skipped = skipped;
    out.mean.assign(k, 0.0);
    out.se.assign(k, 0.0);
    for (const auto& s : shares)
        for (std::size_t i = 0; i < k; ++i) out.mean[i] += s[i];
    for (std::size_t i = 0; i < k; ++i) out.mean[i] /= static_cast<double>(shares.size());
    for (const auto& s : shares)
        for (std::size_t i = 0; i < k; ++i) {
            const double d = s[i] - out.mean[i];
            out.se[i] += d * d;
        }
    for (std::size_t i = 0; i < k; ++i)
        out.se[i] = std::sqrt(out.se[i] / static_cast<double>(shares.size()));
    return out;
}

/// Two-sided achieved significance level for the difference of two
/// statistics estimated on independent samples: the bootstrap distribution
/// of the difference is centered at zero and the p-value is the fraction of
/// centered differences at least as extreme as the observed one.
inline PairwiseTest pairwise_difference_test(const std::vector<double>& draws_a,
                                             const std::vector<double>& draws_b,
                                             double observed_a, double observed_b) {
    if (draws_a.empty() || draws_b.empty())
        throw argument_error("pairwise_difference_test: empty draw list");
    if (draws_a.size() != draws_b.size())
        throw argument_error("pairwise_difference_test: draw lists must have equal length");
    const std::size_t B = draws_a.size();

    std::vector<double> diff(B);
    double mean = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        diff[b] = draws_a[b] - draws_b[b];
        mean += diff[b];
    }
    mean /= static_cast<double>(B);

    const double observed = observed_a - observed_b;
    std::size_t extreme = 0;
    for (double d : diff)
        if (std::abs(d - mean) >= std::abs(observed)) ++extreme;
    return PairwiseTest{observed, static_cast<double>(extreme) / static_cast<double>(B), B};
}

} // namespace ctmc
