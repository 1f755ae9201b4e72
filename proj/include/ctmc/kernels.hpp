#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "ctmc/core.hpp"
#include "ctmc/errors.hpp"
#include "ctmc/matrix.hpp"

namespace ctmc {

/// Truncation controls for the matrix-logarithm series.
struct SeriesConfig {
    double tol = 1e-14; // stop once the term's inf-norm falls below this
    int max_terms = 400;
};

// ---------------------------------------------------------------------------
// Matrix exponential

/// exp(A) by scaling-and-squaring: scale so ||A/2^s||_inf <= 0.5, sum an
/// 18-term Taylor series (last term ~ 0.5^18/18! ~ 6e-22), square s times.
inline Matrix matrix_exp(const Matrix& a) {
    if (!a.square()) throw dimension_error("matrix_exp: matrix is not square");
    if (!a.all_finite()) throw numeric_error("matrix_exp: non-finite entries");
    const std::size_t n = a.rows();

    int s = 0;
    double norm = a.inf_norm();
    while (norm > 0.5 && s < 64) {
        norm *= 0.5;
        ++s;
    }
    Matrix b = a * std::ldexp(1.0, -s);

    Matrix result = Matrix::identity(n);
    Matrix term = Matrix::identity(n);
    for (int k = 1; k <= 18; ++k) {
        term = term * b;
        term *= 1.0 / k;
        result += term;
    }
    for (int i = 0; i < s; ++i) result = result * result;
    return result;
}

// ---------------------------------------------------------------------------
// Matrix logarithm via the alternating power series

struct LogSeriesResult {
    Matrix q_tilde;
    int terms_used = 0;
    bool converged = false;
};

/// Partial sum of log(P) = (P-I) - (P-I)^2/2 + (P-I)^3/3 - ... Terminates on
/// term norm < cfg.tol or cfg.max_terms. Divergence (spectral radius of P-I
/// at or above 1) shows up as non-decaying term norms and is reported through
/// `converged`, never thrown: the caller decides. Every power of (P-I) has
/// zero row sums, so the partial sum does too, converged or not.
inline LogSeriesResult matrix_log_series(const Matrix& p, const SeriesConfig& cfg = {}) {
    if (!p.square()) throw dimension_error("matrix_log_series: matrix is not square");
    if (cfg.tol <= 0.0 || cfg.max_terms < 1)
        throw argument_error("matrix_log_series: invalid series config");
    const std::size_t n = p.rows();

    Matrix e = p - Matrix::identity(n);
    LogSeriesResult out;
    out.q_tilde = Matrix(n, n);
    Matrix power = Matrix::identity(n);
    double sign = 1.0;
    for (int r = 1; r <= cfg.max_terms; ++r) {
        power = power * e;
        Matrix term = power * (sign / r);
        out.q_tilde += term;
        out.terms_used = r;
        const double term_norm = term.inf_norm();
        if (term_norm < cfg.tol) {
            out.converged = true;
            break;
        }
        if (term_norm > 1e8) break; // norms exploding: series diverges
        sign = -sign;
    }
    return out;
}

inline LogSeriesResult matrix_log_series(const StochasticMatrix& p,
                                         const SeriesConfig& cfg = {}) {
    return matrix_log_series(p.entries(), cfg);
}

// ---------------------------------------------------------------------------
// Linear solve, row-vector convention

/// Solves x * A = b (pi-on-the-left convention) by partial-pivot LU on A^T.
/// Throws singular_error when a pivot falls below 1e-13 * ||A||_inf.
inline std::vector<double> solve_linear(const Matrix& a, const std::vector<double>& b) {
    if (!a.square()) throw dimension_error("solve_linear: matrix is not square");
    const std::size_t n = a.rows();
    if (b.size() != n) throw dimension_error("solve_linear: rhs length mismatch");

    Matrix lu = a.transpose(); // x A = b  <=>  A^T x^T = b^T
    std::vector<double> x = b;
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;

    const double tiny = 1e-13 * a.inf_norm();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot_row = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(lu(r, col)) > std::abs(lu(pivot_row, col))) pivot_row = r;
        if (std::abs(lu(pivot_row, col)) <= tiny)
            throw singular_error("solve_linear: matrix is singular to working precision");
        if (pivot_row != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu(col, j), lu(pivot_row, j));
            std::swap(x[col], x[pivot_row]);
        }
        const double inv_pivot = 1.0 / lu(col, col);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = lu(r, col) * inv_pivot;
            if (f == 0.0) continue;
            lu(r, col) = f;
            for (std::size_t j = col + 1; j < n; ++j) lu(r, j) -= f * lu(col, j);
            x[r] -= f * x[col];
        }
    }
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = i + 1; j < n; ++j) x[i] -= lu(i, j) * x[j];
        x[i] /= lu(i, i);
    }
    return x;
}

// ---------------------------------------------------------------------------
// Eigenvalues of a small dense real matrix

namespace detail {

inline double sign_like(double magnitude, double carrier) {
    return carrier >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude);
}

/// Householder similarity reduction to upper Hessenberg form.
inline void hessenberg_reduce(Matrix& h) {
    const int n = static_cast<int>(h.rows());
    std::vector<double> ort(n, 0.0);
    for (int m = 1; m <= n - 2; ++m) {
        double scale = 0.0;
        for (int i = m; i < n; ++i) scale += std::abs(h(i, m - 1));
        if (scale == 0.0) continue;

        double sq = 0.0;
        for (int i = n - 1; i >= m; --i) {
            ort[i] = h(i, m - 1) / scale;
            sq += ort[i] * ort[i];
        }
        double g = -sign_like(std::sqrt(sq), ort[m]);
        sq -= ort[m] * g;
        ort[m] -= g;

        // Apply (I - u u^T / sq) from both sides.
        for (int j = m; j < n; ++j) {
            double f = 0.0;
            for (int i = n - 1; i >= m; --i) f += ort[i] * h(i, j);
            f /= sq;
            for (int i = m; i < n; ++i) h(i, j) -= f * ort[i];
        }
        for (int i = 0; i < n; ++i) {
            double f = 0.0;
            for (int j = n - 1; j >= m; --j) f += ort[j] * h(i, j);
            f /= sq;
            for (int j = m; j < n; ++j) h(i, j) -= f * ort[j];
        }
        h(m, m - 1) = scale * g;
        for (int i = m + 1; i < n; ++i) h(i, m - 1) = 0.0;
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (the ALGOL hqr of
/// Martin, Peters & Wilkinson 1970). Eigenvalues land in (wr, wi); complex
/// conjugate pairs are adjacent. Throws after max_sweeps implicit QR sweeps.
inline void hqr_eigenvalues(Matrix& h, std::vector<double>& wr, std::vector<double>& wi,
                            int max_sweeps) {
    const int n = static_cast<int>(h.rows());
    wr.assign(n, 0.0);
    wi.assign(n, 0.0);

    double norm = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = std::max(i - 1, 0); j < n; ++j) norm += std::abs(h(i, j));

    int en = n - 1;
    double t = 0.0;
    int itn = max_sweeps;
    while (en >= 0) {
        int its = 0;
        const int na = en - 1;
        const int enm2 = na - 1;
        while (true) {
            int l;
            for (l = en; l > 0; --l) {
                double s = std::abs(h(l - 1, l - 1)) + std::abs(h(l, l));
                if (s == 0.0) s = norm;
                volatile double tst1 = s;
                volatile double tst2 = s + std::abs(h(l, l - 1));
                if (tst2 == tst1) break;
            }
            double x = h(en, en);
            if (l == en) { // one root
                wr[en] = x + t;
                wi[en] = 0.0;
                en = na;
                break;
            }
            double y = h(na, na);
            double w = h(en, na) * h(na, en);
            if (l == na) { // two roots
                double p = (y - x) / 2.0;
                double q = p * p + w;
                double zz = std::sqrt(std::abs(q));
                x += t;
                if (q >= 0.0) {
                    zz = p + sign_like(zz, p);
                    wr[na] = x + zz;
                    wr[en] = (zz != 0.0) ? x - w / zz : wr[na];
                    wi[na] = wi[en] = 0.0;
                } else {
                    wr[na] = wr[en] = x + p;
                    wi[na] = zz;
                    wi[en] = -zz;
                }
                en = enm2;
                break;
            }
            if (itn == 0)
                throw numeric_error("eigenvalues: QR iteration exceeded the sweep budget");
            if (its == 10 || its == 20) { // exceptional shift
                t += x;
                for (int i = 0; i <= en; ++i) h(i, i) -= x;
                double s = std::abs(h(en, na)) + std::abs(h(na, enm2));
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            ++its;
            --itn;

            // Look for two consecutive small subdiagonal elements.
            int m;
            double p = 0.0, q = 0.0, r = 0.0, zz = 0.0;
            for (m = enm2; m >= l; --m) {
                zz = h(m, m);
                const double rr = x - zz;
                const double ss = y - zz;
                p = (rr * ss - w) / h(m + 1, m) + h(m, m + 1);
                q = h(m + 1, m + 1) - zz - rr - ss;
                r = h(m + 2, m + 1);
                const double sc = std::abs(p) + std::abs(q) + std::abs(r);
                p /= sc;
                q /= sc;
                r /= sc;
                if (m == l) break;
                volatile double tst1 =
                    std::abs(p) * (std::abs(h(m - 1, m - 1)) + std::abs(zz) +
                                   std::abs(h(m + 1, m + 1)));
                volatile double tst2 =
                    tst1 + std::abs(h(m, m - 1)) * (std::abs(q) + std::abs(r));
                if (tst2 == tst1) break;
            }
            for (int i = m + 2; i <= en; ++i) {
                h(i, i - 2) = 0.0;
                if (i != m + 2) h(i, i - 3) = 0.0;
            }

            // Double QR sweep on rows l..en, columns m..en.
            for (int k = m; k <= na; ++k) {
                const bool notlast = (k != na);
                if (k != m) {
                    p = h(k, k - 1);
                    q = h(k + 1, k - 1);
                    r = notlast ? h(k + 2, k - 1) : 0.0;
                    x = std::abs(p) + std::abs(q) + std::abs(r);
                    if (x == 0.0) continue;
                    p /= x;
                    q /= x;
                    r /= x;
                }
                double s = sign_like(std::sqrt(p * p + q * q + r * r), p);
                if (k != m)
                    h(k, k - 1) = -s * x;
                else if (l != m)
                    h(k, k - 1) = -h(k, k - 1);
                p += s;
                x = p / s;
                y = q / s;
                zz = r / s;
                q /= p;
                r /= p;

                for (int j = k; j < n; ++j) { // row modification
                    double pp = h(k, j) + q * h(k + 1, j);
                    if (notlast) pp += r * h(k + 2, j);
                    h(k, j) -= pp * x;
                    h(k + 1, j) -= pp * y;
                    if (notlast) h(k + 2, j) -= pp * zz;
                }
                const int upper = std::min(en, k + 3);
                for (int i = 0; i <= upper; ++i) { // column modification
                    double pp = x * h(i, k) + y * h(i, k + 1);
                    if (notlast) pp += zz * h(i, k + 2);
                    h(i, k) -= pp;
                    h(i, k + 1) -= pp * q;
                    if (notlast) h(i, k + 2) -= pp * r;
                }
            }
        }
    }
}

} // namespace detail

/// Eigenvalues of a square real matrix (K <= 16) via Householder Hessenberg
/// reduction followed by shifted QR iteration. Sorted by descending real
/// part, then descending imaginary part, so conjugate pairs stay adjacent.
inline std::vector<std::complex<double>> eigenvalues(const Matrix& a) {
    if (!a.square()) throw dimension_error("eigenvalues: matrix is not square");
    const std::size_t n = a.rows();
    if (n > 16) throw dimension_error("eigenvalues: only K <= 16 supported");
    if (!a.all_finite()) throw numeric_error("eigenvalues: non-finite entries");
    if (n == 0) return {};

    Matrix h = a;
    detail::hessenberg_reduce(h);
    std::vector<double> wr, wi;
    detail::hqr_eigenvalues(h, wr, wi, 100 * static_cast<int>(n));

    std::vector<std::complex<double>> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = {wr[i], wi[i]};
    std::sort(eig.begin(), eig.end(), [](const auto& a, const auto& b) {
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() > b.imag();
    });
    return eig;
}

} // namespace ctmc
