#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ctmc/errors.hpp"
#include "ctmc/kernels.hpp"
#include "ctmc/matrix.hpp"

namespace ctmc {

/// A seasonal time series of one transition rate or share. season_length is
/// tau (4 for quarterly data).
struct SeasonalSeries {
    std::vector<double> values;
    std::vector<std::string> period_ids; // optional, same length when present
    int season_length = 4;
};

inline void require_series(const SeasonalSeries& s, std::size_t min_len, const char* who) {
    if (s.season_length < 1) throw argument_error(std::string(who) + ": season_length < 1");
    if (!s.period_ids.empty() && s.period_ids.size() != s.values.size())
        throw argument_error(std::string(who) + ": period ids do not match values");
    if (s.values.size() < min_len)
        throw fit_error(std::string(who) + ": series too short (" +
                        std::to_string(s.values.size()) + " < " + std::to_string(min_len) + ")");
}

/// Gaussian one-step-residual AICc, shared by every model family so the
/// criterion is comparable within a selection grid.
inline double gaussian_aicc(const std::vector<double>& residuals, int n_params) {
    const auto n = static_cast<double>(residuals.size());
    double sse = 0.0;
    for (double r : residuals) sse += r * r;
    const double sigma2 = std::max(sse / n, 1e-300);
    if (n - n_params - 1 <= 0) return std::numeric_limits<double>::infinity();
    return n * std::log(sigma2) + 2.0 * n_params +
           2.0 * n_params * (n_params + 1.0) / (n - n_params - 1.0);
}

// ---------------------------------------------------------------------------
// TSLR: trend + seasonal linear regression

class TslrModel {
public:
    /// OLS of the series on intercept, linear trend, and tau-1 seasonal
    /// indicators. Needs at least tau + 2 observations.
    static TslrModel fit(const SeasonalSeries& s) {
        const int tau = s.season_length;
        require_series(s, static_cast<std::size_t>(tau) + 2, "fit_tslr");
        const int n = static_cast<int>(s.values.size());
        const int p = tau + 1; // intercept, trend, tau-1 dummies

        TslrModel m;
        m.n_ = n;
        m.tau_ = tau;
        Matrix xtx(p, p);
        std::vector<double> xty(p, 0.0);
        std::vector<double> x(p);
        for (int t = 0; t < n; ++t) {
            design_row(t, tau, x);
            for (int a = 0; a < p; ++a) {
                xty[a] += x[a] * s.values[t];
                for (int b = 0; b < p; ++b) xtx(a, b) += x[a] * x[b];
            }
        }
        try {
            m.coef_ = solve_linear(xtx, xty); // symmetric system
            m.xtx_inv_ = Matrix(p, p);
            for (int a = 0; a < p; ++a) {
                std::vector<double> e(p, 0.0);
                e[a] = 1.0;
                auto col = solve_linear(xtx, e);
                for (int b = 0; b < p; ++b) m.xtx_inv_(a, b) = col[b];
            }
        } catch (const singular_error&) {
            throw fit_error("fit_tslr: rank-deficient design");
        }

        m.residuals_.resize(n);
        double sse = 0.0;
        for (int t = 0; t < n; ++t) {
            design_row(t, tau, x);
            double fitted = 0.0;
            for (int a = 0; a < p; ++a) fitted += x[a] * m.coef_[a];
            m.residuals_[t] = s.values[t] - fitted;
            sse += m.residuals_[t] * m.residuals_[t];
        }
        m.sigma2_ = sse / n;
        m.aicc_ = gaussian_aicc(m.residuals_, p);
        return m;
    }

    double forecast(int f) const {
        std::vector<double> x(tau_ + 1);
        design_row(n_ - 1 + f, tau_, x);
        double out = 0.0;
        for (std::size_t a = 0; a < x.size(); ++a) out += x[a] * coef_[a];
        return out;
    }

    /// sigma^2 (1 + x_f' (X'X)^{-1} x_f): OLS prediction variance.
    double forecast_variance(int f) const {
        std::vector<double> x(tau_ + 1);
        design_row(n_ - 1 + f, tau_, x);
        auto z = row_times(x, xtx_inv_);
        double quad = 0.0;
        for (std::size_t a = 0; a < x.size(); ++a) quad += x[a] * z[a];
        return sigma2_ * (1.0 + quad);
    }

    const std::vector<double>& residuals() const { return residuals_; }
    const std::vector<double>& coefficients() const { return coef_; }
    double sigma2() const { return sigma2_; }
    double aicc() const { return aicc_; }
    int param_count() const { return tau_ + 1; }
    std::string order() const { return "trend+season[" + std::to_string(tau_) + "]"; }

private:
    static void design_row(int t, int tau, std::vector<double>& x) {
        std::fill(x.begin(), x.end(), 0.0);
        x[0] = 1.0;
        x[1] = static_cast<double>(t + 1);
        const int season = t % tau;
        if (season > 0) x[1 + season] = 1.0;
    }

    int n_ = 0, tau_ = 0;
    std::vector<double> coef_;
    Matrix xtx_inv_;
    std::vector<double> residuals_;
    double sigma2_ = 0.0, aicc_ = 0.0;
};

inline TslrModel fit_tslr(const SeasonalSeries& s) { return TslrModel::fit(s); }

// ---------------------------------------------------------------------------
// ETS: additive Holt-Winters

class EtsModel {
public:
    /// Additive (level, trend, seasonal) exponential smoothing. Smoothing
    /// parameters picked by one-step SSE over the grid {0.05,...,0.95}^3.
    /// Initial states come from the first two full seasons, which makes the
    /// filter exact on noiseless trend-plus-seasonal input.
    static EtsModel fit(const SeasonalSeries& s) {
        const int tau = s.season_length;
        require_series(s, static_cast<std::size_t>(2) * tau, "fit_ets");
        const int n = static_cast<int>(s.values.size());
        const auto& y = s.values;

        double m1 = 0.0, m2 = 0.0;
        for (int t = 0; t < tau; ++t) m1 += y[t];
        for (int t = tau; t < 2 * tau; ++t) m2 += y[t];
        m1 /= tau;
        m2 /= tau;
        const double b0 = (m2 - m1) / tau;
        const double l0 = m1 - b0 * (tau + 1) / 2.0;
        std::vector<double> s0(tau, 0.0);
        for (int j = 0; j < tau; ++j) {
            s0[j] = 0.5 * ((y[j] - (l0 + b0 * (j + 1))) + (y[j + tau] - (l0 + b0 * (j + tau + 1))));
        }
        double s_mean = 0.0;
        for (double v : s0) s_mean += v;
        s_mean /= tau;
        for (double& v : s0) v -= s_mean;

        EtsModel best;
        double best_sse = std::numeric_limits<double>::infinity();
        std::vector<double> resid(n), seas(tau);
        for (int ia = 1; ia <= 19; ++ia)
            for (int ib = 1; ib <= 19; ++ib)
                for (int ic = 1; ic <= 19; ++ic) {
                    const double alpha = ia * 0.05, beta = ib * 0.05, gamma = ic * 0.05;
                    double level = l0, trend = b0;
                    seas = s0;
                    double sse = 0.0;
                    for (int t = 0; t < n; ++t) {
                        const int j = t % tau;
                        const double eps = y[t] - (level + trend + seas[j]);
                        resid[t] = eps;
                        sse += eps * eps;
                        const double new_level = level + trend + alpha * eps;
                        trend += beta * eps;
                        seas[j] += gamma * eps;
                        level = new_level;
                    }
                    if (sse < best_sse) {
                        best_sse = sse;
                        best.alpha_ = alpha;
                        best.beta_ = beta;
                        best.gamma_ = gamma;
                        best.level_ = level;
                        best.trend_ = trend;
                        best.seasonal_ = seas;
                        best.residuals_ = resid;
                    }
                }
        best.n_ = n;
        best.tau_ = tau;
        best.sigma2_ = best_sse / n;
        best.aicc_ = gaussian_aicc(best.residuals_, 3 + tau);
        return best;
    }

    double forecast(int f) const {
        return level_ + f * trend_ + seasonal_[(n_ - 1 + f) % tau_];
    }

    /// sigma^2 (1 + sum_{j<f} c_j^2) with c_j = alpha + j beta + gamma on
    /// whole-season lags.
    double forecast_variance(int f) const {
        double acc = 1.0;
        for (int j = 1; j < f; ++j) {
            const double c = alpha_ + j * beta_ + (j % tau_ == 0 ? gamma_ : 0.0);
            acc += c * c;
        }
        return sigma2_ * acc;
    }

    const std::vector<double>& residuals() const { return residuals_; }
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }
    double gamma() const { return gamma_; }
    double sigma2() const { return sigma2_; }
    double aicc() const { return aicc_; }
    int param_count() const { return 3 + tau_; }
    std::string order() const {
        char buf[64];
        std::snprintf(buf, sizeof buf, "A,A,A(%.2f,%.2f,%.2f)", alpha_, beta_, gamma_);
        return buf;
    }

private:
    int n_ = 0, tau_ = 0;
    double alpha_ = 0.0, beta_ = 0.0, gamma_ = 0.0;
    double level_ = 0.0, trend_ = 0.0;
    std::vector<double> seasonal_;
    std::vector<double> residuals_;
    double sigma2_ = 0.0, aicc_ = 0.0;
};

inline EtsModel fit_ets(const SeasonalSeries& s) { return EtsModel::fit(s); }

// ---------------------------------------------------------------------------
// Seasonal ARIMA by conditional sum of squares

struct ArimaOrder {
    int p = 0, d = 0, q = 0, P = 0, D = 0, Q = 0;
};

namespace detail {

/// Polynomials stored with their leading 1: {1, c1, c2, ...}.
inline std::vector<double> poly_mul(const std::vector<double>& a,
                                    const std::vector<double>& b) {
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

inline std::vector<double> ar_poly(const std::vector<double>& coeffs, int lag_step) {
    std::vector<double> out(coeffs.size() * lag_step + 1, 0.0);
    out[0] = 1.0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) out[(i + 1) * lag_step] = -coeffs[i];
    return out;
}

inline std::vector<double> ma_poly(const std::vector<double>& coeffs, int lag_step) {
    std::vector<double> out(coeffs.size() * lag_step + 1, 0.0);
    out[0] = 1.0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) out[(i + 1) * lag_step] = coeffs[i];
    return out;
}

/// Roots of (1 - c1 B - c2 B^2) strictly outside the unit circle: the
/// stationarity triangle. The grid never needs orders above 2, and a product
/// of factors is admissible iff each factor is. MA polynomials carry the
/// opposite sign convention (1 + t1 B + t2 B^2), so their coefficients are
/// negated before the same test. The margin keeps roots clearly off the
/// circle; conditional sums of squares can otherwise buy spurious fit from
/// near-unit, near-cancelling factor pairs.
inline bool ar_factor_admissible(const std::vector<double>& coeffs, double margin = 0.01) {
    if (coeffs.empty()) return true;
    if (coeffs.size() == 1) return std::abs(coeffs[0]) < 1.0 - margin;
    const double c1 = coeffs[0], c2 = coeffs[1];
    return std::abs(c2) < 1.0 - margin && c2 + c1 < 1.0 - margin && c2 - c1 < 1.0 - margin;
}

inline bool ma_factor_admissible(const std::vector<double>& coeffs, double margin = 0.01) {
    std::vector<double> negated(coeffs);
    for (double& c : negated) c = -c;
    return ar_factor_admissible(negated, margin);
}

/// KPSS level-stationarity statistic with a Bartlett long-run variance
/// (truncation 4 (n/100)^{1/4}). Used to pick the differencing order, since
/// AICc values are not comparable across different d.
inline double kpss_level_statistic(const std::vector<double>& y) {
    const auto n = static_cast<double>(y.size());
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= n;

    std::vector<double> e(y.size());
    double gamma0 = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
        e[t] = y[t] - mean;
        gamma0 += e[t] * e[t];
    }
    gamma0 /= n;
    if (gamma0 <= 1e-300) return 0.0; // constant series: trivially stationary

    const int L = static_cast<int>(4.0 * std::pow(n / 100.0, 0.25));
    double lr_var = gamma0;
    for (int l = 1; l <= L; ++l) {
        double gamma_l = 0.0;
        for (std::size_t t = l; t < y.size(); ++t) gamma_l += e[t] * e[t - l];
        gamma_l /= n;
        lr_var += 2.0 * (1.0 - static_cast<double>(l) / (L + 1)) * gamma_l;
    }
    lr_var = std::max(lr_var, 1e-12 * gamma0);

    double cumsum = 0.0, stat = 0.0;
    for (double v : e) {
        cumsum += v;
        stat += cumsum * cumsum;
    }
    return stat / (n * n * lr_var);
}

/// 5% critical value of the level-KPSS test; above it the series is treated
/// as needing one difference.
inline constexpr double kKpssCritical5 = 0.463;

/// Derivative-free Nelder-Mead, enough for CSS surfaces of <= 7 parameters.
inline std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x0, double step, int max_iter) {
    const std::size_t dim = x0.size();
    std::vector<std::vector<double>> simplex(dim + 1, x0);
    for (std::size_t i = 0; i < dim; ++i) simplex[i + 1][i] += step;
    std::vector<double> fx(dim + 1);
    for (std::size_t i = 0; i <= dim; ++i) fx[i] = f(simplex[i]);

    for (int iter = 0; iter < max_iter; ++iter) {
        std::vector<std::size_t> idx(dim + 1);
        for (std::size_t i = 0; i <= dim; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fx[a] < fx[b]; });
        const std::size_t best = idx[0], worst = idx[dim], second = idx[dim - 1];
        if (std::abs(fx[worst] - fx[best]) <= 1e-12 * (1.0 + std::abs(fx[best]))) break;

        std::vector<double> centroid(dim, 0.0);
        for (std::size_t i = 0; i <= dim; ++i) {
            if (i == worst) continue;
            for (std::size_t j = 0; j < dim; ++j) centroid[j] += simplex[i][j];
        }
        for (double& c : centroid) c /= static_cast<double>(dim);

        auto blend = [&](double t) {
            std::vector<double> x(dim);
            for (std::size_t j = 0; j < dim; ++j)
                x[j] = centroid[j] + t * (simplex[worst][j] - centroid[j]);
            return x;
        };
        auto reflected = blend(-1.0);
        const double fr = f(reflected);
        if (fr < fx[best]) {
            auto expanded = blend(-2.0);
            const double fe = f(expanded);
            if (fe < fr) {
                simplex[worst] = expanded;
                fx[worst] = fe;
            } else {
                simplex[worst] = reflected;
                fx[worst] = fr;
            }
        } else if (fr < fx[second]) {
            simplex[worst] = reflected;
            fx[worst] = fr;
        } else {
            auto contracted = blend(fr < fx[worst] ? -0.5 : 0.5);
            const double fc = f(contracted);
            if (fc < std::min(fr, fx[worst])) {
                simplex[worst] = contracted;
                fx[worst] = fc;
            } else { // shrink toward the best vertex
                for (std::size_t i = 0; i <= dim; ++i) {
                    if (i == best) continue;
                    for (std::size_t j = 0; j < dim; ++j)
                        simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
                    fx[i] = f(simplex[i]);
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i <= dim; ++i)
        if (fx[i] < fx[best]) best = i;
    return simplex[best];
}

} // namespace detail

class ArimaModel {
public:
    /// Fits one (p,d,q)(P,D,Q)_tau order by conditional sum of squares: the
    /// innovations are run recursively with zero pre-sample values and the
    /// first p + tau*P differenced observations used only as conditioning. A
    /// constant is included when d + D = 0. Non-stationary or non-invertible
    /// parameter points are rejected by penalty.
    static std::optional<ArimaModel> fit_order(const SeasonalSeries& s, const ArimaOrder& o) {
        const int tau = s.season_length;
        const int n = static_cast<int>(s.values.size());
        ArimaModel m;
        m.order_ = o;
        m.tau_ = tau;
        m.y_ = s.values;

        // Seasonal differencing first, then regular.
        m.u_ = s.values;
        if (o.D == 1) {
            if (n <= tau) return std::nullopt;
            std::vector<double> d(n - tau);
            for (int t = tau; t < n; ++t) d[t - tau] = m.u_[t] - m.u_[t - tau];
            m.u_ = std::move(d);
        }
        m.w_ = m.u_;
        if (o.d == 1) {
            if (m.w_.size() < 2) return std::nullopt;
            std::vector<double> d(m.w_.size() - 1);
            for (std::size_t t = 1; t < m.w_.size(); ++t) d[t - 1] = m.w_[t] - m.w_[t - 1];
            m.w_ = std::move(d);
        }

        const int pa = o.p + tau * o.P;
        const int qa = o.q + tau * o.Q;
        m.with_constant_ = (o.d + o.D == 0);
        const int n_params = o.p + o.q + o.P + o.Q + (m.with_constant_ ? 1 : 0);
        const int n_w = static_cast<int>(m.w_.size());
        if (n_w - pa < n_params + 3) return std::nullopt; // not enough residuals

        double w_mean = 0.0;
        for (double v : m.w_) w_mean += v;
        w_mean /= std::max(n_w, 1);

        auto unpack = [&](const std::vector<double>& x, ArimaModel& into) {
            int at = 0;
            into.phi_.assign(x.begin() + at, x.begin() + at + o.p);
            at += o.p;
            into.theta_.assign(x.begin() + at, x.begin() + at + o.q);
            at += o.q;
            into.sphi_.assign(x.begin() + at, x.begin() + at + o.P);
            at += o.P;
            into.stheta_.assign(x.begin() + at, x.begin() + at + o.Q);
            at += o.Q;
            into.constant_ = into.with_constant_ ? x[at] : 0.0;
        };

        std::vector<double> resid;
        auto css = [&](const std::vector<double>& x) -> double {
            unpack(x, m);
            if (!detail::ar_factor_admissible(m.phi_) ||
                !detail::ar_factor_admissible(m.sphi_) ||
                !detail::ma_factor_admissible(m.theta_) ||
                !detail::ma_factor_admissible(m.stheta_)) {
                double overshoot = 0.0;
                for (const auto* cs : {&m.phi_, &m.theta_, &m.sphi_, &m.stheta_})
                    for (double c : *cs) overshoot += std::abs(c);
                return 1e100 * (1.0 + overshoot);
            }
            m.ar_full_ = detail::poly_mul(detail::ar_poly(m.phi_, 1),
                                          detail::ar_poly(m.sphi_, tau));
            m.ma_full_ = detail::poly_mul(detail::ma_poly(m.theta_, 1),
                                          detail::ma_poly(m.stheta_, tau));
            return m.run_css(resid);
        };

        std::vector<double> x0(n_params, 0.1);
        if (m.with_constant_) x0.back() = w_mean;
        std::vector<double> best = x0;
        if (n_params > 0) {
            if (n_params == 1 && m.with_constant_) {
                // Pure-constant model: CSS is exactly minimized at the mean.
                best[0] = w_mean;
            } else {
                best = detail::nelder_mead(css, x0, 0.2, 400 * n_params);
            }
        }
        const double sse = css(best);
        if (!(sse < 1e99)) return std::nullopt; // no admissible parameters found
        // A solution pressed against the admissibility boundary is a
        // near-unit or near-cancelling factor buying spurious fit; reject
        // the order, as stepwise ARIMA selectors do with near-unit roots.
        if (!detail::ar_factor_admissible(m.phi_, 0.02) ||
            !detail::ar_factor_admissible(m.sphi_, 0.02) ||
            !detail::ma_factor_admissible(m.theta_, 0.02) ||
            !detail::ma_factor_admissible(m.stheta_, 0.02))
            return std::nullopt;

        m.residuals_ = resid;
        m.sigma2_ = sse / std::max<std::size_t>(resid.size(), 1);
        m.aicc_ = gaussian_aicc(resid, n_params);
        m.n_params_ = n_params;

        // psi weights of the full (differenced) model, for forecast variance
        std::vector<double> ar_total = m.ar_full_;
        if (o.d == 1) ar_total = detail::poly_mul(ar_total, {1.0, -1.0});
        if (o.D == 1) {
            std::vector<double> sd(tau + 1, 0.0);
            sd[0] = 1.0;
            sd[tau] = -1.0;
            ar_total = detail::poly_mul(ar_total, sd);
        }
        m.ar_total_ = std::move(ar_total);
        return m;
    }

    /// Grid search over p,q in {0,1,2} and P,D,Q in {0,1}, minimum AICc. The
    /// differencing order d is fixed beforehand by a KPSS test: AICc is not
    /// comparable across models fitted to series differenced a different
    /// number of times.
    static ArimaModel fit(const SeasonalSeries& s) {
        require_series(s, static_cast<std::size_t>(2) * s.season_length + 4, "fit_arima");
        const int d = detail::kpss_level_statistic(s.values) > detail::kKpssCritical5 ? 1 : 0;
        std::optional<ArimaModel> best;
        int attempted = 0, failed = 0;
        for (int D = 0; D <= 1; ++D)
            for (int p = 0; p <= 2; ++p)
                for (int q = 0; q <= 2; ++q)
                    for (int P = 0; P <= 1; ++P)
                        for (int Q = 0; Q <= 1; ++Q) {
                            ++attempted;
                            auto m = fit_order(s, ArimaOrder{p, d, q, P, D, Q});
                            if (!m) {
                                ++failed;
                                continue;
                            }
                            if (!best || m->aicc_ < best->aicc_) best = std::move(m);
                        }
        if (!best)
            throw fit_error("fit_arima: all " + std::to_string(attempted) +
                            " grid orders failed (" + std::to_string(failed) + " rejected)");
        return *best;
    }

    double forecast(int f) const {
        auto w = forecast_w(f);
        // Integrate the differencing back, newest value last.
        std::vector<double> u = u_;
        std::vector<double> y = y_;
        for (int h = 1; h <= f; ++h) {
            double uv = w[h - 1];
            if (order_.d == 1) uv += u.back();
            u.push_back(uv);
            double yv = uv;
            if (order_.D == 1) yv += y[y.size() - tau_];
            y.push_back(yv);
        }
        return y.back();
    }

    double forecast_variance(int f) const {
        std::vector<double> psi(f, 0.0);
        psi[0] = 1.0;
        for (int j = 1; j < f; ++j) {
            double v = j < static_cast<int>(ma_full_.size()) ? ma_full_[j] : 0.0;
            for (int i = 1; i <= j && i < static_cast<int>(ar_total_.size()); ++i)
                v -= ar_total_[i] * psi[j - i];
            psi[j] = v;
        }
        double acc = 0.0;
        for (int j = 0; j < f; ++j) acc += psi[j] * psi[j];
        return sigma2_ * acc;
    }

    const std::vector<double>& residuals() const { return residuals_; }
    const ArimaOrder& selected_order() const { return order_; }
    const std::vector<double>& ar_coefficients() const { return phi_; }
    const std::vector<double>& ma_coefficients() const { return theta_; }
    double constant() const { return constant_; }
    double sigma2() const { return sigma2_; }
    double aicc() const { return aicc_; }
    int param_count() const { return n_params_; }
    std::string order() const {
        char buf[64];
        std::snprintf(buf, sizeof buf, "(%d,%d,%d)(%d,%d,%d)[%d]", order_.p, order_.d,
                      order_.q, order_.P, order_.D, order_.Q, tau_);
        return buf;
    }

private:
    /// One-step innovations; returns the conditional SSE and fills eps_.
    double run_css(std::vector<double>& resid_out) {
        const int n_w = static_cast<int>(w_.size());
        const int pa = static_cast<int>(ar_full_.size()) - 1;
        const int qa = static_cast<int>(ma_full_.size()) - 1;
        wt_.resize(n_w);
        for (int t = 0; t < n_w; ++t) wt_[t] = w_[t] - constant_;
        eps_.assign(n_w, 0.0);
        resid_out.clear();
        double sse = 0.0;
        for (int t = pa; t < n_w; ++t) {
            double e = 0.0;
            for (int i = 0; i <= pa; ++i) e += ar_full_[i] * wt_[t - i];
            for (int j = 1; j <= qa && j <= t; ++j) e -= ma_full_[j] * eps_[t - j];
            eps_[t] = e;
            resid_out.push_back(e);
            sse += e * e;
        }
        return sse;
    }

    /// Forecasts of the differenced series w (not yet integrated).
    std::vector<double> forecast_w(int f) const {
        const int n_w = static_cast<int>(w_.size());
        const int pa = static_cast<int>(ar_full_.size()) - 1;
        const int qa = static_cast<int>(ma_full_.size()) - 1;
        std::vector<double> wt = wt_;
        std::vector<double> eps = eps_;
        std::vector<double> out(f, 0.0);
        for (int h = 0; h < f; ++h) {
            const int t = n_w + h;
            double v = 0.0;
            for (int i = 1; i <= pa && i <= t; ++i) v -= ar_full_[i] * wt[t - i];
            for (int j = 1; j <= qa && j <= t; ++j)
                if (t - j < n_w) v += ma_full_[j] * eps[t - j];
            wt.push_back(v);
            eps.push_back(0.0);
            out[h] = v + constant_;
        }
        return out;
    }

    ArimaOrder order_;
    int tau_ = 4;
    bool with_constant_ = false;
    std::vector<double> y_, u_, w_, wt_, eps_;
    std::vector<double> phi_, theta_, sphi_, stheta_;
    double constant_ = 0.0;
    std::vector<double> ar_full_{1.0}, ma_full_{1.0}, ar_total_{1.0};
    std::vector<double> residuals_;
    double sigma2_ = 0.0, aicc_ = 0.0;
    int n_params_ = 0;
};

inline ArimaModel fit_arima_grid(const SeasonalSeries& s) { return ArimaModel::fit(s); }

// ---------------------------------------------------------------------------
// Forecast combination

struct FitSummary {
    std::string family;
    std::string order;
    double aicc;
};

struct ForecastResult {
    std::vector<double> point;
    std::vector<double> lower80, upper80, lower95, upper95;
    std::vector<FitSummary> models_used;
    std::vector<std::string> families_failed;
    int horizon = 0;
    double residual_sd = 0.0; // sqrt of the mean of the families' residual variances
};

/// Equal-weight combination of TSLR, ETS and ARIMA point forecasts. Families
/// that fail to fit are dropped and recorded. Interval half-widths come from
/// the mean of the families' per-horizon forecast variances (monotonized in
/// the horizon) times the 80%/95% normal quantiles.
inline ForecastResult combine_forecasts(const SeasonalSeries& s, int horizon) {
    if (horizon < 1) throw argument_error("combine_forecasts: horizon must be >= 1");
    require_series(s, 2 * static_cast<std::size_t>(s.season_length) + 2, "combine_forecasts");

    struct Family {
        std::string name;
        std::function<double(int)> point;
        std::function<double(int)> variance;
        FitSummary summary;
        double sigma2;
    };
    std::vector<Family> fams;
    ForecastResult out;
    out.horizon = horizon;

    try {
        auto m = std::make_shared<TslrModel>(fit_tslr(s));
        fams.push_back({"tslr", [m](int f) { return m->forecast(f); },
                        [m](int f) { return m->forecast_variance(f); },
                        {"tslr", m->order(), m->aicc()}, m->sigma2()});
    } catch (const fit_error& e) {
        out.families_failed.push_back("tslr: " + std::string(e.what()));
    }
    try {
        auto m = std::make_shared<EtsModel>(fit_ets(s));
        fams.push_back({"ets", [m](int f) { return m->forecast(f); },
                        [m](int f) { return m->forecast_variance(f); },
                        {"ets", m->order(), m->aicc()}, m->sigma2()});
    } catch (const fit_error& e) {
        out.families_failed.push_back("ets: " + std::string(e.what()));
    }
    try {
        auto m = std::make_shared<ArimaModel>(fit_arima_grid(s));
        fams.push_back({"arima", [m](int f) { return m->forecast(f); },
                        [m](int f) { return m->forecast_variance(f); },
                        {"arima", m->order(), m->aicc()}, m->sigma2()});
    } catch (const fit_error& e) {
        out.families_failed.push_back("arima: " + std::string(e.what()));
    }
    if (fams.empty()) throw fit_error("combine_forecasts: no family could be fitted");

    double mean_sigma2 = 0.0;
    for (const auto& fam : fams) {
        out.models_used.push_back(fam.summary);
        mean_sigma2 += fam.sigma2;
    }
    mean_sigma2 /= static_cast<double>(fams.size());
    out.residual_sd = std::sqrt(mean_sigma2);

    const double z80 = 1.2816, z95 = 1.9600;
    double running_var = 0.0;
    for (int f = 1; f <= horizon; ++f) {
        double point = 0.0, var = 0.0;
        for (const auto& fam : fams) {
            point += fam.point(f);
            var += fam.variance(f);
        }
        point /= static_cast<double>(fams.size());
        var /= static_cast<double>(fams.size());
        running_var = std::max(running_var, var); // keep bands monotone in f
        const double sd = std::sqrt(running_var);
        out.point.push_back(point);
        out.lower80.push_back(point - z80 * sd);
        out.upper80.push_back(point + z80 * sd);
        out.lower95.push_back(point - z95 * sd);
        out.upper95.push_back(point + z95 * sd);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gap between observed tail and counterfactual forecast

struct GapEntry {
    double gap; // observed - point: the realized forecast error
    bool outside80;
    bool outside95;
};

/// Compares the observed post-origin values with the forecast intervals.
/// observed may be shorter than the horizon (the remaining horizons are
/// simply not evaluated) but never longer.
inline std::vector<GapEntry> counterfactual_gap(const std::vector<double>& observed,
                                                const ForecastResult& forecast) {
    if (observed.empty() || observed.size() > forecast.point.size())
        throw argument_error("counterfactual_gap: observed tail does not align with the "
                             "forecast horizons");
    std::vector<GapEntry> out;
    out.reserve(observed.size());
    for (std::size_t f = 0; f < observed.size(); ++f) {
        GapEntry e{};
        e.gap = observed[f] - forecast.point[f];
        e.outside80 = observed[f] < forecast.lower80[f] || observed[f] > forecast.upper80[f];
        e.outside95 = observed[f] < forecast.lower95[f] || observed[f] > forecast.upper95[f];
        out.push_back(e);
    }
    return out;
}

} // namespace ctmc
