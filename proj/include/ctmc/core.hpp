#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ctmc/errors.hpp"
#include "ctmc/matrix.hpp"

namespace ctmc {

/// Default tolerance for validity checks on constructed domain objects.
inline constexpr double kDefaultTol = 1e-10;

/// Entries smaller than this in magnitude are clamped to exact zero at
/// construction; the log-series output carries rounding residue at this scale.
inline constexpr double kNoiseFloor = 1e-14;

// ---------------------------------------------------------------------------
// StateSpace

/// Ordered set of K distinct labour-market state labels (e.g. SE, FT, PE, U,
/// IN). Labels are opaque; the order fixes the matrix/vector indexing.
class StateSpace {
public:
    explicit StateSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
        if (labels_.size() < 2)
            throw validation_error("StateSpace requires at least 2 states");
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            if (labels_[i].empty())
                throw validation_error("StateSpace labels must be nonempty");
            auto [it, inserted] = index_.emplace(labels_[i], i);
            if (!inserted)
                throw validation_error("StateSpace labels must be unique: duplicate '" +
                                       labels_[i] + "'");
        }
    }

    std::size_t size() const { return labels_.size(); }
    const std::vector<std::string>& labels() const { return labels_; }
    const std::string& label(std::size_t i) const { return labels_.at(i); }

    std::size_t index(const std::string& label) const {
        auto it = index_.find(label);
        if (it == index_.end())
            throw argument_error("unknown state label '" + label + "'");
        return it->second;
    }

    bool contains(const std::string& label) const { return index_.count(label) != 0; }

    friend bool operator==(const StateSpace& a, const StateSpace& b) {
        return a.labels_ == b.labels_;
    }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline void require_same_space(const StateSpace& a, const StateSpace& b,
                               const char* what) {
    if (!(a == b)) throw dimension_error(std::string(what) + ": state spaces differ");
}

// ---------------------------------------------------------------------------
// Validity diagnostics

struct GeneratorDiagnostics {
    bool is_valid = false;
    double worst_negative_offdiag = 0.0; // most negative off-diagonal (0 if none)
    double max_row_sum_abs = 0.0;        // largest |row sum|
    double worst_positive_diag = 0.0;    // largest positive diagonal (0 if none)
};

struct StochasticDiagnostics {
    bool is_valid = false;
    double max_row_sum_error = 0.0; // largest |row sum - 1|
    double worst_out_of_range = 0.0; // largest distance outside [0,1] (0 if none)
};

/// Checks the conservative-generator conditions: q_ii <= 0, q_ij >= 0 for
/// i != j, and zero row sums, each within tol.
inline GeneratorDiagnostics validate_generator(const Matrix& m, double tol = kDefaultTol) {
    if (!m.square()) throw dimension_error("validate_generator: matrix is not square");
    GeneratorDiagnostics d;
    const std::size_t k = m.rows();
    for (std::size_t i = 0; i < k; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double v = m(i, j);
            row_sum += v;
            if (i == j)
                d.worst_positive_diag = std::max(d.worst_positive_diag, v);
            else
                d.worst_negative_offdiag = std::min(d.worst_negative_offdiag, v);
        }
        d.max_row_sum_abs = std::max(d.max_row_sum_abs, std::abs(row_sum));
    }
    d.is_valid = d.worst_negative_offdiag >= -tol && d.worst_positive_diag <= tol &&
                 d.max_row_sum_abs <= tol;
    return d;
}

/// Checks rows sum to 1 and entries lie in [0,1], each within tol.
inline StochasticDiagnostics validate_stochastic(const Matrix& m, double tol = kDefaultTol) {
    if (!m.square()) throw dimension_error("validate_stochastic: matrix is not square");
    StochasticDiagnostics d;
    const std::size_t k = m.rows();
    for (std::size_t i = 0; i < k; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double v = m(i, j);
            row_sum += v;
            double outside = std::max(0.0 - v, v - 1.0);
            d.worst_out_of_range = std::max(d.worst_out_of_range, outside);
        }
        d.max_row_sum_error = std::max(d.max_row_sum_error, std::abs(row_sum - 1.0));
    }
    d.is_valid = d.max_row_sum_error <= tol && d.worst_out_of_range <= tol;
    return d;
}

namespace detail {
inline void clamp_noise(Matrix& m) {
    for (double& x : m.data())
        if (x != 0.0 && std::abs(x) < kNoiseFloor) x = 0.0;
}
inline void clamp_noise(std::vector<double>& v) {
    for (double& x : v)
        if (x != 0.0 && std::abs(x) < kNoiseFloor) x = 0.0;
}
} // namespace detail

// ---------------------------------------------------------------------------
// TransitionCounts

/// K x K integer matrix of observed period-to-period moves: counts(i,j) is
/// the number of individuals in state i at the from-period and state j at the
/// to-period. Individuals missing in either period are excluded.
class TransitionCounts {
public:
    TransitionCounts(StateSpace space, std::vector<std::vector<std::int64_t>> counts,
                     std::string period = {})
        : space_(std::move(space)), counts_(std::move(counts)), period_(std::move(period)) {
        const std::size_t k = space_.size();
        if (counts_.size() != k)
            throw dimension_error("TransitionCounts: wrong number of rows");
        for (const auto& row : counts_) {
            if (row.size() != k)
                throw dimension_error("TransitionCounts: wrong number of columns");
            for (std::int64_t c : row)
                if (c < 0) throw validation_error("TransitionCounts entries must be >= 0");
        }
    }

    static TransitionCounts zero(const StateSpace& space, std::string period = {}) {
        return TransitionCounts(
            space,
            std::vector<std::vector<std::int64_t>>(space.size(),
                                                   std::vector<std::int64_t>(space.size(), 0)),
            std::move(period));
    }

    const StateSpace& space() const { return space_; }
    const std::string& period() const { return period_; }
    std::int64_t at(std::size_t i, std::size_t j) const { return counts_[i][j]; }
    std::int64_t& at(std::size_t i, std::size_t j) { return counts_[i][j]; }

    std::int64_t row_total(std::size_t i) const {
        std::int64_t s = 0;
        for (std::int64_t c : counts_[i]) s += c;
        return s;
    }

    std::int64_t total() const {
        std::int64_t s = 0;
        for (std::size_t i = 0; i < counts_.size(); ++i) s += row_total(i);
        return s;
    }

    bool empty() const { return total() == 0; }

private:
    StateSpace space_;
    std::vector<std::vector<std::int64_t>> counts_;
    std::string period_;
};

// ---------------------------------------------------------------------------
// StochasticMatrix

/// Discrete-time transition probability matrix: rows sum to 1, entries in
/// [0,1]. Validated at construction; tolerance is a parameter because inputs
/// range from exact MLE ratios to rounded published tables.
class StochasticMatrix {
public:
    StochasticMatrix(StateSpace space, Matrix entries, double tol = kDefaultTol)
        : space_(std::move(space)), entries_(std::move(entries)) {
        if (entries_.rows() != space_.size() || entries_.cols() != space_.size())
            throw dimension_error("StochasticMatrix: entries do not match state space");
        detail::clamp_noise(entries_);
        auto d = validate_stochastic(entries_, tol);
        if (!d.is_valid)
            throw validation_error("StochasticMatrix invalid: max row-sum error " +
                                   std::to_string(d.max_row_sum_error) +
                                   ", worst out-of-range " +
                                   std::to_string(d.worst_out_of_range));
    }

    const StateSpace& space() const { return space_; }
    const Matrix& entries() const { return entries_; }
    std::size_t size() const { return space_.size(); }
    double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }

private:
    StateSpace space_;
    Matrix entries_;
};

// ---------------------------------------------------------------------------
// GeneratorMatrix

/// Instantaneous transition-rate matrix (rates per unit period): rows sum to
/// 0, off-diagonals >= 0, diagonals <= 0.
class GeneratorMatrix {
public:
    GeneratorMatrix(StateSpace space, Matrix entries, double tol = kDefaultTol)
        : space_(std::move(space)), entries_(std::move(entries)) {
        if (entries_.rows() != space_.size() || entries_.cols() != space_.size())
            throw dimension_error("GeneratorMatrix: entries do not match state space");
        detail::clamp_noise(entries_);
        auto d = validate_generator(entries_, tol);
        if (!d.is_valid)
            throw validation_error("GeneratorMatrix invalid: worst negative off-diagonal " +
                                   std::to_string(d.worst_negative_offdiag) +
                                   ", max |row sum| " + std::to_string(d.max_row_sum_abs));
    }

    const StateSpace& space() const { return space_; }
    const Matrix& entries() const { return entries_; }
    std::size_t size() const { return space_.size(); }
    double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }

private:
    StateSpace space_;
    Matrix entries_;
};

// ---------------------------------------------------------------------------
// ShareVector

/// Nonnegative shares of the working-age population across states, summing
/// to 1. Optionally tagged with the period it describes.
class ShareVector {
public:
    ShareVector(StateSpace space, std::vector<double> shares, std::string period = {},
                double tol = kDefaultTol)
        : space_(std::move(space)), shares_(std::move(shares)), period_(std::move(period)) {
        if (shares_.size() != space_.size())
            throw dimension_error("ShareVector: length does not match state space");
        detail::clamp_noise(shares_);
        double sum = 0.0;
        for (double s : shares_) {
            if (s < -tol)
                throw validation_error("ShareVector shares must be >= 0 (got " +
                                       std::to_string(s) + ")");
            sum += s;
        }
        if (std::abs(sum - 1.0) > tol)
            throw validation_error("ShareVector shares must sum to 1 (got " +
                                   std::to_string(sum) + ")");
    }

    const StateSpace& space() const { return space_; }
    const std::vector<double>& shares() const { return shares_; }
    const std::string& period() const { return period_; }
    std::size_t size() const { return space_.size(); }
    double operator[](std::size_t i) const { return shares_[i]; }
    double at(const std::string& label) const { return shares_[space_.index(label)]; }

private:
    StateSpace space_;
    std::vector<double> shares_;
    std::string period_;
};

// ---------------------------------------------------------------------------
// PanelDataset

/// One observation: an individual's state at a period boundary.
struct PanelRecord {
    std::string id;
    std::uint32_t period; // index into PanelDataset::periods()
    std::uint16_t state;  // index into the state space
};

/// Longitudinal panel: at most one record per (individual, period). Periods
/// are opaque ordered identifiers; their total order is supplied here by the
/// ingestion layer, never parsed as dates.
class PanelDataset {
public:
    PanelDataset(StateSpace space, std::vector<std::string> periods,
                 std::vector<PanelRecord> records)
        : space_(std::move(space)), periods_(std::move(periods)), records_(std::move(records)) {
        for (std::size_t i = 0; i < periods_.size(); ++i) {
            auto [it, inserted] = period_index_.emplace(periods_[i], i);
            if (!inserted)
                throw validation_error("PanelDataset: duplicate period id '" + periods_[i] + "'");
        }
        for (const auto& r : records_) {
            if (r.period >= periods_.size())
                throw validation_error("PanelDataset: record period index out of range");
            if (r.state >= space_.size())
                throw validation_error("PanelDataset: record state index out of range");
        }
        std::sort(records_.begin(), records_.end(), [](const PanelRecord& a, const PanelRecord& b) {
            if (a.id != b.id) return a.id < b.id;
            return a.period < b.period;
        });
        for (std::size_t i = 1; i < records_.size(); ++i) {
            if (records_[i].id == records_[i - 1].id &&
                records_[i].period == records_[i - 1].period)
                throw data_error("PanelDataset: duplicate (id, period) observation for id '" +
                                 records_[i].id + "'");
        }
    }

    const StateSpace& space() const { return space_; }
    const std::vector<std::string>& periods() const { return periods_; }
    /// Records sorted by (id, period).
    const std::vector<PanelRecord>& records() const { return records_; }

    std::size_t period_index(const std::string& period) const {
        auto it = period_index_.find(period);
        if (it == period_index_.end())
            throw argument_error("unknown period '" + period + "'");
        return it->second;
    }

    /// Per-state occupancy counts at one period boundary.
    std::vector<std::int64_t> occupancy(std::uint32_t period) const {
        std::vector<std::int64_t> counts(space_.size(), 0);
        for (const auto& r : records_)
            if (r.period == period) ++counts[r.state];
        return counts;
    }

    /// Observed shares at one period; throws if the period is empty.
    ShareVector observed_shares(std::uint32_t period) const {
        auto counts = occupancy(period);
        std::int64_t total = 0;
        for (auto c : counts) total += c;
        if (total == 0) throw data_error("PanelDataset: no observations in period '" +
                                         periods_.at(period) + "'");
        std::vector<double> shares(counts.size());
        for (std::size_t i = 0; i < counts.size(); ++i)
            shares[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
        return ShareVector(space_, std::move(shares), periods_.at(period));
    }

private:
    StateSpace space_;
    std::vector<std::string> periods_;
    std::vector<PanelRecord> records_;
    std::unordered_map<std::string, std::size_t> period_index_;
};

} // namespace ctmc
