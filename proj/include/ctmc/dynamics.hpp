#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "ctmc/core.hpp"
#include "ctmc/errors.hpp"
#include "ctmc/kernels.hpp"

namespace ctmc {

/// Instantaneous rates of the three-state (employed, unemployed, inactive)
/// model: job finding (u->e), job destruction (e->u), exits to inactivity
/// from employment and unemployment, and entries from inactivity into
/// unemployment and employment.
struct ThreeStateRates {
    double alpha;  // u -> e
    double lambda; // e -> u
    double mu;     // e -> n
    double gamma;  // u -> n
    double phi_u;  // n -> u
    double phi_e;  // n -> e
};

struct EquilibriumResult {
    ShareVector shares;
    double spectral_gap; // -max Re of the nonzero eigenvalues
    double half_life;    // ln 2 / spectral_gap, in periods
};

// ---------------------------------------------------------------------------

/// pi(t) = pi(0) exp(Q t).
inline ShareVector propagate(const ShareVector& pi0, const GeneratorMatrix& q, double t) {
    if (t < 0.0) throw argument_error("propagate: t must be >= 0");
    require_same_space(pi0.space(), q.space(), "propagate");
    if (t == 0.0) return pi0;
    Matrix p = matrix_exp(q.entries() * t);
    std::vector<double> out = row_times(pi0.shares(), p);
    return ShareVector(pi0.space(), std::move(out), {}, 1e-9);
}

/// Stationary shares from x (11^T - Q) = 1, solved rather than inverted, with
/// a stationarity check x Q ~ 0. Also reports the spectral gap of Q and the
/// implied half-life of convergence to equilibrium.
inline EquilibriumResult equilibrium(const GeneratorMatrix& q) {
    const std::size_t k = q.size();
    Matrix system(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) system(i, j) = 1.0 - q(i, j);

    std::vector<double> x;
    try {
        x = solve_linear(system, std::vector<double>(k, 1.0));
    } catch (const singular_error&) {
        throw numeric_error(
            "equilibrium: system is singular; the chain has no unique equilibrium "
            "(multiple recurrent classes?)");
    }

    std::vector<double> residual = row_times(x, q.entries());
    double worst = 0.0, sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        worst = std::max(worst, std::abs(residual[j]));
        sum += x[j];
    }
    // An imperfect generator (rounded published tables) cannot satisfy
    // x Q = 0 below its own row-sum defect; the check scales with it.
    const double defect = validate_generator(q.entries(), 1e300).max_row_sum_abs;
    const double tol_res = 1e-9 + 2.0 * defect;
    const double tol_sum = 1e-10 + 2.0 * defect;
    if (worst > tol_res || std::abs(sum - 1.0) > tol_sum)
        throw numeric_error("equilibrium: solution fails the stationarity check (|xQ| = " +
                            std::to_string(worst) + ", sum = " + std::to_string(sum) + ")");
    for (double& v : x) v /= sum; // exact unit mass even for imperfect input

    auto eig = eigenvalues(q.entries()); // sorted by descending real part
    double gap = 0.0;
    for (const auto& lam : eig) {
        if (std::abs(lam.real()) <= 1e-9 && std::abs(lam.imag()) <= 1e-9) continue;
        gap = -lam.real(); // first nonzero eigenvalue has the largest real part
        break;
    }
    const double half_life = gap > 0.0 ? std::log(2.0) / gap
                                       : std::numeric_limits<double>::infinity();
    return EquilibriumResult{ShareVector(q.space(), std::move(x), {}, 1e-9), gap, half_life};
}

/// Closed-form steady state of the three-state model, over (e, u, n).
inline ShareVector equilibrium_three_state(const ThreeStateRates& r) {
    if (r.alpha < 0 || r.lambda < 0 || r.mu < 0 || r.gamma < 0 || r.phi_u < 0 || r.phi_e < 0)
        throw argument_error("equilibrium_three_state: rates must be >= 0");
    const double denom = (r.gamma + r.phi_u) * (r.lambda + r.mu) +
                         r.alpha * (r.phi_u + r.mu) +
                         r.phi_e * (r.lambda + r.gamma + r.alpha);
    if (denom <= 0.0)
        throw argument_error("equilibrium_three_state: degenerate rates (zero denominator)");
    const double pi_e = (r.phi_e * (r.gamma + r.alpha) + r.alpha * r.phi_u) / denom;
    const double pi_u = (r.phi_u * (r.lambda + r.mu) + r.phi_e * r.lambda) / denom;
    const double pi_n = (r.alpha * r.mu + r.gamma * (r.lambda + r.mu)) / denom;
    return ShareVector(StateSpace({"e", "u", "n"}), {pi_e, pi_u, pi_n});
}

/// Assembles the 3x3 generator implied by the three-state rates, ordered
/// (e, u, n).
inline GeneratorMatrix three_state_generator(const ThreeStateRates& r) {
    Matrix q{{-(r.lambda + r.mu), r.lambda, r.mu},
             {r.alpha, -(r.alpha + r.gamma), r.gamma},
             {r.phi_e, r.phi_u, -(r.phi_e + r.phi_u)}};
    return GeneratorMatrix(StateSpace({"e", "u", "n"}), std::move(q));
}

/// Unemployment rate: unemployed over labour force (unemployed + employed).
inline double unemployment_rate(const ShareVector& shares,
                                const std::vector<std::string>& employed_states,
                                const std::string& unemployed_state) {
    const double pi_u = shares.at(unemployed_state);
    double labour_force = pi_u;
    for (const auto& s : employed_states) labour_force += shares.at(s);
    if (labour_force <= 0.0)
        throw argument_error("unemployment_rate: labour force is empty");
    return pi_u / labour_force;
}

// ---------------------------------------------------------------------------
// Seasonal aggregation

/// Q_a = sum of the seasonal generators. Exact for the share recursion only
/// when the seasonal matrices commute; see max_commutator_norm.
inline GeneratorMatrix aggregate_seasonal(const std::vector<GeneratorMatrix>& qs) {
    if (qs.empty()) throw argument_error("aggregate_seasonal: empty list");
    Matrix sum = qs.front().entries();
    for (std::size_t s = 1; s < qs.size(); ++s) {
        require_same_space(qs.front().space(), qs[s].space(), "aggregate_seasonal");
        sum += qs[s].entries();
    }
    return GeneratorMatrix(qs.front().space(), std::move(sum));
}

/// max over pairs of ||Q_s Q_r - Q_r Q_s||_inf: how far the seasonal family
/// is from the commuting case where exp(Q_a) equals the product of the
/// seasonal exponentials.
inline double max_commutator_norm(const std::vector<GeneratorMatrix>& qs) {
    double worst = 0.0;
    for (std::size_t s = 0; s < qs.size(); ++s)
        for (std::size_t r = s + 1; r < qs.size(); ++r) {
            Matrix c = qs[s].entries() * qs[r].entries() - qs[r].entries() * qs[s].entries();
            worst = std::max(worst, c.inf_norm());
        }
    return worst;
}

} // namespace ctmc
