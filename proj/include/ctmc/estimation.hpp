#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ctmc/core.hpp"
#include "ctmc/errors.hpp"
#include "ctmc/kernels.hpp"

namespace ctmc {

/// How to repair a raw log-series output whose off-diagonals dip negative.
enum class RegularizationMethod {
    TruncateAbsorb,           // zero negatives, absorb the mass into the diagonal
    RedistributeProportional, // zero negatives, take the mass out of positive entries
    None,                     // reject anything negative beyond numerical noise
};

inline const char* to_string(RegularizationMethod m) {
    switch (m) {
        case RegularizationMethod::TruncateAbsorb: return "truncate-absorb";
        case RegularizationMethod::RedistributeProportional: return "redistribute-proportional";
        case RegularizationMethod::None: return "none";
    }
    return "?";
}

inline RegularizationMethod regularization_from_string(const std::string& s) {
    if (s == "truncate-absorb") return RegularizationMethod::TruncateAbsorb;
    if (s == "redistribute-proportional") return RegularizationMethod::RedistributeProportional;
    if (s == "none") return RegularizationMethod::None;
    throw argument_error("unknown regularization method '" + s + "'");
}

/// Full record of one P -> Q estimation: the raw series output next to the
/// repaired generator, so users can judge how much regularization did.
struct GeneratorEstimate {
    GeneratorMatrix Q;
    StochasticMatrix P;
    TransitionCounts counts;
    Matrix raw_q_tilde;
    RegularizationMethod regularization;
    bool series_converged = false;
    int series_terms = 0;
    double negative_mass_removed = 0.0; // sum of |negative off-diagonals| zeroed
};

// ---------------------------------------------------------------------------
// Counting

/// Tallies moves between two consecutive periods of a panel. Individuals
/// observed in only one of the two periods are dropped from this pair.
inline TransitionCounts count_transitions(const PanelDataset& panel,
                                          const std::string& from_period,
                                          const std::string& to_period) {
    const std::size_t from = panel.period_index(from_period);
    const std::size_t to = panel.period_index(to_period);
    if (to != from + 1)
        throw argument_error("count_transitions: periods '" + from_period + "' and '" +
                             to_period + "' are not consecutive");

    TransitionCounts counts = TransitionCounts::zero(
        panel.space(), from_period + "->" + to_period);
    // Records are sorted by (id, period); matching observations are adjacent.
    const auto& recs = panel.records();
    for (std::size_t i = 0; i + 1 < recs.size(); ++i) {
        if (recs[i].period == from && recs[i + 1].period == to &&
            recs[i].id == recs[i + 1].id)
            ++counts.at(recs[i].state, recs[i + 1].state);
    }
    return counts;
}

// ---------------------------------------------------------------------------
// Maximum likelihood P

/// p_ij = m_ij / m_i. Any empty row is an error naming the offending state;
/// the caller may merge periods or exclude the state.
inline StochasticMatrix mle_stochastic(const TransitionCounts& counts) {
    const std::size_t k = counts.space().size();
    Matrix p(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::int64_t row_total = counts.row_total(i);
        if (row_total == 0)
            throw data_error("mle_stochastic: no observed transitions out of state '" +
                             counts.space().label(i) + "' (row " + std::to_string(i) + ")");
        for (std::size_t j = 0; j < k; ++j)
            p(i, j) = static_cast<double>(counts.at(i, j)) / static_cast<double>(row_total);
    }
    return StochasticMatrix(counts.space(), std::move(p), 1e-12);
}

// ---------------------------------------------------------------------------
// Regularization of the raw series output

namespace detail {

/// Applies the chosen repair row by row; returns the total negative mass
/// removed. Rows already clean are passed through bit-identically.
inline double regularize_rows(Matrix& q, RegularizationMethod method) {
    const std::size_t k = q.rows();
    double removed = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double neg = 0.0, pos = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (j == i) continue;
            if (q(i, j) < 0.0)
                neg += -q(i, j);
            else
                pos += q(i, j);
        }
        if (neg == 0.0) continue;
        removed += neg;

        switch (method) {
            case RegularizationMethod::TruncateAbsorb:
                // q_ij = max(q_ij, 0); the diagonal absorbs the removed mass.
                for (std::size_t j = 0; j < k; ++j) {
                    if (j == i) continue;
                    if (q(i, j) < 0.0) {
                        q(i, i) += q(i, j);
                        q(i, j) = 0.0;
                    }
                }
                break;
            case RegularizationMethod::RedistributeProportional: {
                const double scale = pos > 0.0 ? std::max(0.0, 1.0 - neg / pos) : 0.0;
                double off_sum = 0.0;
                for (std::size_t j = 0; j < k; ++j) {
                    if (j == i) continue;
                    q(i, j) = q(i, j) < 0.0 ? 0.0 : q(i, j) * scale;
                    off_sum += q(i, j);
                }
                q(i, i) = -off_sum;
                break;
            }
            case RegularizationMethod::None:
                throw validation_error(
                    "estimate_generator: raw series output has negative off-diagonals "
                    "(total " + std::to_string(neg) + " in row " + std::to_string(i) +
                    ") and regularization is disabled");
        }
    }
    return removed;
}

} // namespace detail

/// Runs the log series on P and repairs the result into a valid generator.
inline GeneratorEstimate estimate_generator(const StochasticMatrix& p,
                                            RegularizationMethod method,
                                            const SeriesConfig& cfg = {},
                                            std::optional<TransitionCounts> counts = {}) {
    LogSeriesResult series = matrix_log_series(p, cfg);
    Matrix q = series.q_tilde;

    double removed = 0.0;
    if (method == RegularizationMethod::None) {
        // Absorb numerical noise only; anything materially negative is an error.
        for (std::size_t i = 0; i < q.rows(); ++i)
            for (std::size_t j = 0; j < q.cols(); ++j) {
                if (i == j || q(i, j) >= 0.0) continue;
                if (q(i, j) < -1e-12)
                    throw validation_error(
                        "estimate_generator: off-diagonal (" + std::to_string(i) + "," +
                        std::to_string(j) + ") = " + std::to_string(q(i, j)) +
                        " is negative and regularization is disabled");
                removed += -q(i, j);
                q(i, i) += q(i, j);
                q(i, j) = 0.0;
            }
    } else {
        removed = detail::regularize_rows(q, method);
    }

    GeneratorMatrix valid(p.space(), std::move(q), 1e-9);
    return GeneratorEstimate{
        std::move(valid),
        p,
        counts ? std::move(*counts) : TransitionCounts::zero(p.space()),
        std::move(series.q_tilde),
        method,
        series.converged,
        series.terms_used,
        removed,
    };
}

inline GeneratorEstimate estimate_generator(const TransitionCounts& counts,
                                            RegularizationMethod method,
                                            const SeriesConfig& cfg = {}) {
    return estimate_generator(mle_stochastic(counts), method, cfg, counts);
}

// ---------------------------------------------------------------------------
// Period-by-period estimation

/// One period pair of an estimated series: either an estimate or the reason
/// it could not be produced (an empty state, say). A bad pair never aborts
/// the rest of the series.
struct SeriesEntry {
    std::string from_period;
    std::string to_period;
    std::optional<GeneratorEstimate> estimate;
    std::string message; // populated when estimate is absent
};

inline std::vector<SeriesEntry> estimate_series(const PanelDataset& panel,
                                                RegularizationMethod method,
                                                const SeriesConfig& cfg = {}) {
    const auto& periods = panel.periods();
    if (periods.size() < 2)
        throw data_error("estimate_series: panel needs at least 2 periods");

    std::vector<SeriesEntry> out;
    out.reserve(periods.size() - 1);
    for (std::size_t t = 0; t + 1 < periods.size(); ++t) {
        SeriesEntry entry{periods[t], periods[t + 1], std::nullopt, {}};
        try {
            TransitionCounts counts = count_transitions(panel, periods[t], periods[t + 1]);
            entry.estimate = estimate_generator(counts, method, cfg);
        } catch (const error& e) {
            entry.message = e.what();
        }
        out.push_back(std::move(entry));
    }
    return out;
}

} // namespace ctmc
